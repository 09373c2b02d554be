"""Model directories: ``model.json`` metadata plus MOCMMAT1 matrices."""

import json
from pathlib import Path

import numpy as np

from . import matfile
from .mapping import MappingKind, MappingSpec
from .objectives import CognitiveModel

MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def save_model(model: CognitiveModel, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    spec = model.mapping
    files = {"shared_space": "G.mat", "weights": "W.mat"}
    matfile.write_matrix(path / files["shared_space"], model.shared_space)
    matfile.write_matrix(path / files["weights"], model.weights.reshape(1, -1))
    mapping = {"kind": spec.kind.value, "output_dim": spec.output_dim}
    if spec.kind is MappingKind.GAUSSIAN:
        mapping["gamma"] = spec.gamma
        mapping["anchors"] = "anchors.mat"
        matfile.write_matrix(path / "anchors.mat", spec.anchors)
    elif spec.kind is MappingKind.SVD:
        mapping["basis"] = "basis.mat"
        matfile.write_matrix(path / "basis.mat", spec.basis)
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "T": int(model.shared_space.shape[0]),
        "V": int(spec.output_dim),
        "alpha": model.alpha,
        "lambda_orth": model.lambda_orth,
        "category": int(model.category),
        "mapping": mapping,
        "files": files,
        "prediction_rule": "label = sign(X R W), sign(0) = +1; reference form 1_T - X R W not used for labels",
        "config": model.config,
    }
    (path / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _read(path: Path, name: str) -> np.ndarray:
    p = path / name
    if not p.exists():
        raise ModelFormatError(f"{p}: missing model file")
    try:
        return matfile.read_matrix(p)
    except matfile.FormatError as exc:
        raise ModelFormatError(str(exc)) from exc


def load_model(path) -> CognitiveModel:
    path = Path(path)
    mpath = path / "model.json"
    if not mpath.exists():
        raise ModelFormatError(f"{mpath}: missing model file")
    try:
        meta = json.loads(mpath.read_text())
        m = meta["mapping"]
        kind = MappingKind(m["kind"])
        files = meta["files"]
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ModelFormatError(f"{mpath}: malformed metadata ({exc})") from exc
    if kind is MappingKind.GAUSSIAN:
        spec = MappingSpec(kind, int(m["output_dim"]), gamma=float(m["gamma"]), anchors=_read(path, m["anchors"]))
    elif kind is MappingKind.SVD:
        spec = MappingSpec(kind, int(m["output_dim"]), basis=_read(path, m["basis"]))
    else:
        spec = MappingSpec(kind, int(m["output_dim"]))
    G = _read(path, files["shared_space"])
    W = _read(path, files["weights"]).reshape(-1)
    return CognitiveModel(G, W, spec, float(meta["alpha"]), float(meta["lambda_orth"]),
                          int(meta["category"]), meta.get("config", {}))


def save_models(models, path) -> list:
    """One ``model_cat<k>`` subdirectory per binary model."""
    path = Path(path)
    names = []
    for m in models:
        name = f"model_cat{m.category}"
        save_model(m, path / name)
        names.append(name)
    (path / "models.json").write_text(json.dumps({"models": names}, indent=2) + "\n")
    return names


def load_models(path) -> list:
    path = Path(path)
    index = path / "models.json"
    if not index.exists():
        raise ModelFormatError(f"{index}: missing model file")
    try:
        names = json.loads(index.read_text())["models"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ModelFormatError(f"{index}: malformed index ({exc})") from exc
    return [load_model(path / n) for n in names]
