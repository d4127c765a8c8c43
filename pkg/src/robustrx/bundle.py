"""Versioned, human-diffable model files.

A bundle is JSON with explicit field names. Coefficients and small
vectors are plain float lists (Python's float repr round-trips exactly);
neighbor member arrays are base64 blobs of little-endian float64.
"""
import base64
from dataclasses import asdict, fields
import json
import os

import numpy as np

from .baselines import CartModel, CartNode
from .errors import BundleVersionError, DataError
from .knn import KnnPredictor
from .pipeline import ImputationModel, LinearPredictor, MethodModel, Pipeline, PipelineConfig
from .policy import PolicyConfig
from .rlad import SolverOptions
from .threshold import SubsampleEnsemble

BUNDLE_VERSION = "robustrx-model/1"


def _blob(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "f64le": base64.b64encode(a.tobytes()).decode("ascii")}


def _unblob(d):
    return np.frombuffer(base64.b64decode(d["f64le"]), dtype="<f8").reshape(d["shape"]).copy()


def _vec(a):
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def _mat(a):
    return [_vec(row) for row in np.asarray(a, dtype=float)]


def _encode_knn(p):
    return {"type": "knn", "weights": _vec(p.weights), "k": int(p.k), "group": int(p.group),
            "members_X": _blob(p.X), "members_y": _blob(p.y)}


def _encode_predictor(p):
    if isinstance(p, KnnPredictor):
        return _encode_knn(p)
    if isinstance(p, LinearPredictor):
        return {"type": "linear", "kind": p.kind, "beta": _vec(p.beta), "hyper": float(p.hyper),
                "intercept": p.intercept}
    if isinstance(p, CartModel):
        return {"type": "cart", "max_depth": p.max_depth, "min_leaf": p.min_leaf, "tree": p.root.to_dict()}
    raise TypeError(f"cannot serialize {type(p).__name__}")


def _decode_predictor(d):
    kind = d["type"]
    if kind == "knn":
        return KnnPredictor(np.array(d["weights"], dtype=float), _unblob(d["members_X"]),
                            _unblob(d["members_y"]), int(d["k"]), int(d["group"]))
    if kind == "linear":
        return LinearPredictor(d["kind"], np.array(d["beta"], dtype=float), float(d["hyper"]), bool(d["intercept"]))
    if kind == "cart":
        return CartModel(CartNode.from_dict(d["tree"]), int(d["max_depth"]), int(d["min_leaf"]))
    raise DataError(f"unknown predictor type {kind!r}")


def _encode_config(cfg):
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = asdict(v) if isinstance(v, SolverOptions) else (list(v) if isinstance(v, tuple) else v)
    return out


def _decode_config(d):
    kw = {}
    for f in fields(PipelineConfig):
        if f.name not in d:
            continue
        v = d[f.name]
        kw[f.name] = SolverOptions(**v) if f.name == "solver" else (tuple(v) if isinstance(v, list) else v)
    return PipelineConfig(**kw)


def pipeline_to_dict(pipe):
    methods = {}
    for name, m in pipe.methods.items():
        methods[name] = {
            "predictors": [_encode_predictor(p) for p in m.predictors],
            "linear": None if m.linear is None else [_encode_predictor(p) for p in m.linear],
            "tuned_k": m.tuned_k,
            "k_rule": None if m.k_rule is None else list(m.k_rule),
            "policy": {"xi": m.policy.xi, "scale": m.policy.scale},
        }
    imp = pipe.imputation
    return {
        "version": BUNDLE_VERSION,
        "feature_names": list(pipe.feature_names),
        "treatment_names": list(pipe.treatment_names),
        "co_index": pipe.co_index,
        "normalization": {"means": _vec(pipe.means), "stds": _vec(pipe.stds)},
        "eps_bar": pipe.eps_bar,
        "soc_mode": pipe.soc_mode,
        "config": _encode_config(pipe.config),
        "methods": methods,
        "method_order": list(pipe.methods),
        "ensembles": [{"group": e.group, "a": e.a, "betas": _mat(e.betas)} for e in pipe.ensembles],
        "imputation": {"beta": _vec(imp.beta), "r": imp.r, "n_treatments": imp.n_treatments,
                       "knn": _encode_knn(imp.knn)},
    }


def pipeline_from_dict(d):
    version = d.get("version")
    if version != BUNDLE_VERSION:
        raise BundleVersionError(f"model file version {version!r} is not {BUNDLE_VERSION!r}")
    methods = {}
    for name in d["method_order"]:
        m = d["methods"][name]
        methods[name] = MethodModel(
            name,
            [_decode_predictor(p) for p in m["predictors"]],
            None if m["linear"] is None else [_decode_predictor(p) for p in m["linear"]],
            m["tuned_k"],
            None if m["k_rule"] is None else tuple(m["k_rule"]),
            PolicyConfig(m["policy"]["xi"], scale=m["policy"]["scale"]),
        )
    imp = d["imputation"]
    return Pipeline(
        tuple(d["feature_names"]),
        tuple(d["treatment_names"]),
        int(d["co_index"]),
        np.array(d["normalization"]["means"], dtype=float),
        np.array(d["normalization"]["stds"], dtype=float),
        methods,
        [SubsampleEnsemble(np.array(e["betas"], dtype=float), int(e["a"]), int(e["group"])) for e in d["ensembles"]],
        ImputationModel(np.array(imp["beta"], dtype=float), float(imp["r"]), _decode_predictor(imp["knn"]),
                        int(imp["n_treatments"])),
        int(d["soc_mode"]),
        float(d["eps_bar"]),
        _decode_config(d["config"]),
    )


def save_pipeline(pipe, path):
    """Write atomically (temp file + rename)."""
    text = json.dumps(pipeline_to_dict(pipe), indent=1, sort_keys=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def load_pipeline(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a model file ({exc})") from None
    if not isinstance(d, dict):
        raise DataError(f"{path}: not a model file")
    return pipeline_from_dict(d)
