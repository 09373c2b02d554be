"""Multi-subject scans: data model, on-disk format, synthetic generator, splits."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import matfile
from .glm import design_matrix

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"


class DatasetError(ValueError):
    pass


@dataclass
class SubjectScan:
    id: str
    F: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.tau = np.atleast_2d(np.asarray(self.tau, dtype=float))
        if self.F.shape[0] != self.tau.shape[0]:
            raise DatasetError(f"subject {self.id}: F has {self.F.shape[0]} rows but tau has {self.tau.shape[0]}")
        if np.any(self.tau < 0):
            raise DatasetError(f"subject {self.id}: onsets must be nonnegative")


@dataclass
class Dataset:
    scans: list
    C: int
    TR: float
    category_names: list = field(default_factory=list)

    def __post_init__(self):
        if not self.scans:
            raise DatasetError("dataset has no scans")
        if not self.category_names:
            self.category_names = [f"cat{c + 1}" for c in range(self.C)]
        if len(self.category_names) != self.C:
            raise DatasetError(f"{len(self.category_names)} category names for C={self.C}")
        T, V = self.scans[0].F.shape
        for s in self.scans:
            if s.F.shape != (T, V):
                raise DatasetError(f"subject {s.id}: F shape {s.F.shape} differs from {(T, V)}")
            if s.tau.shape != (T, self.C):
                raise DatasetError(f"subject {s.id}: tau shape {s.tau.shape} differs from {(T, self.C)}")
        ids = [s.id for s in self.scans]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate subject ids")

    @property
    def S(self) -> int:
        return len(self.scans)

    @property
    def T(self) -> int:
        return self.scans[0].F.shape[0]

    @property
    def V_org(self) -> int:
        return self.scans[0].F.shape[1]

    @property
    def ids(self) -> list:
        return [s.id for s in self.scans]

    def scan(self, sid: str) -> SubjectScan:
        for s in self.scans:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def subset(self, ids) -> "Dataset":
        wanted = set(ids)
        return Dataset([s for s in self.scans if s.id in wanted], self.C, self.TR, list(self.category_names))

    def design(self, sid: Optional[str] = None) -> np.ndarray:
        scan = self.scans[0] if sid is None else self.scan(sid)
        return design_matrix(scan.tau, self.TR)


@dataclass
class Split:
    train_ids: list
    test_ids: list


class Rotation(str, enum.Enum):
    ORTHOGONAL = "orthogonal"
    IDENTITY = "identity"


@dataclass
class GroundTruth:
    template: np.ndarray  # C x V_org shared response
    rotations: list  # per-subject V_org x V_org
    labels: np.ndarray
    signal: list  # per-subject noiseless, unstandardised D @ template @ Q


def standardize(F) -> np.ndarray:
    """Column-wise z-score with population variance; constant columns become 0."""
    F = np.asarray(F, dtype=float)
    if F.shape[0] < 2:
        raise ValueError("need at least two time points to standardize")
    mu = F.mean(axis=0)
    sd = F.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    if np.any(const):
        logger.warning("standardize: %d constant column(s) mapped to zero", int(const.sum()))
    out = np.zeros_like(F)
    keep = ~const
    out[:, keep] = (F[:, keep] - mu[keep]) / sd[keep]
    return out


def derive_labels(tau) -> np.ndarray:
    """Category 1..C per time point; 0 for rest or simultaneous categories."""
    active = np.asarray(tau) > 0
    labels = np.argmax(active, axis=1) + 1
    labels[active.sum(axis=1) != 1] = 0
    return labels.astype(int)


def block_onsets(T: int, C: int, runs: int = 2, on_fraction: float = 0.5) -> np.ndarray:
    """Alternating category blocks, each a run of 1-TR events followed by rest."""
    blocks = C * runs
    if T % blocks:
        raise DatasetError(f"T={T} is not divisible into {blocks} blocks ({C} categories x {runs} runs)")
    width = T // blocks
    on = min(width, max(1, int(round(width * on_fraction))))
    tau = np.zeros((T, C))
    for k in range(blocks):
        tau[k * width : k * width + on, k % C] = 1.0
    return tau


def random_rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def generate_synthetic(
    S: int,
    T: int,
    V_org: int,
    C: int,
    noise_sigma: float,
    rotation="orthogonal",
    seed: int = 0,
    TR: float = 2.0,
    runs: int = 2,
    on_fraction: float = 0.5,
    standardize_data: bool = True,
) -> tuple[Dataset, GroundTruth]:
    """Rotated copies of one shared response, convolved with the HRF, plus noise."""
    rotation = Rotation(rotation)
    if S < 1 or T < 2 or C < 1:
        raise DatasetError(f"infeasible dimensions S={S}, T={T}, C={C}")
    if V_org < C:
        raise DatasetError(f"V_org={V_org} must be at least C={C}")
    if noise_sigma < 0:
        raise DatasetError("noise_sigma must be nonnegative")
    tau = block_onsets(T, C, runs, on_fraction)
    D = design_matrix(tau, TR)

    root = np.random.SeedSequence(seed)
    template_ss, *subject_ss = root.spawn(S + 1)
    template = np.random.default_rng(template_ss).standard_normal((C, V_org))
    shared = D @ template

    scans, rotations, signals = [], [], []
    for i, ss in enumerate(subject_ss):
        rng = np.random.default_rng(ss)
        Q = random_rotation(rng, V_org) if rotation is Rotation.ORTHOGONAL else np.eye(V_org)
        signal = shared @ Q
        F = signal + noise_sigma * rng.standard_normal((T, V_org))
        if standardize_data:
            F = standardize(F)
        scans.append(SubjectScan(f"sub-{i + 1:02d}", F, tau.copy()))
        rotations.append(Q)
        signals.append(signal)
    ds = Dataset(scans, C, float(TR), [f"cat{c + 1}" for c in range(C)])
    return ds, GroundTruth(template, rotations, derive_labels(tau), signals)


def loso_splits(dataset: Dataset) -> list[Split]:
    if dataset.S < 2:
        raise DatasetError("leave-one-subject-out needs at least two subjects")
    ids = sorted(dataset.ids)
    return [Split([j for j in ids if j != i], [i]) for i in ids]


def _manifest(dataset: Dataset, files: list, fmt: str) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "matrix_format": fmt,
        "S": dataset.S,
        "T": dataset.T,
        "V_org": dataset.V_org,
        "C": dataset.C,
        "TR": dataset.TR,
        "category_names": list(dataset.category_names),
        "subjects": files,
    }


def save(dataset: Dataset, path, fmt: str = "MOCMMAT1") -> None:
    """Write ``manifest.json`` plus one F and one tau file per subject."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files = []
    for s in dataset.scans:
        if fmt == "MOCMMAT1":
            f_name, t_name = f"{s.id}_F.mat", f"{s.id}_tau.mat"
            matfile.write_matrix(path / f_name, s.F)
            matfile.write_matrix(path / t_name, s.tau)
        elif fmt == "csv":
            f_name, t_name = f"{s.id}_F.csv", f"{s.id}_tau.csv"
            matfile.write_matrix_csv(path / f_name, s.F)
            matfile.write_onsets_csv(path / t_name, s.tau)
        else:
            raise ValueError(f"unknown matrix format {fmt!r}")
        files.append({"id": s.id, "F": f_name, "tau": t_name})
    (path / MANIFEST).write_text(json.dumps(_manifest(dataset, files, fmt), indent=2, sort_keys=True) + "\n")


def load(path) -> Dataset:
    path = Path(path)
    mpath = path / MANIFEST
    if not mpath.exists():
        raise DatasetError(f"{mpath}: manifest not found")
    try:
        man = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{mpath}: invalid JSON ({exc})") from exc
    for key in ("format_version", "S", "T", "V_org", "C", "TR", "subjects"):
        if key not in man:
            raise DatasetError(f"{mpath}: missing field '{key}'")
    if man["format_version"] != FORMAT_VERSION:
        raise DatasetError(f"{mpath}: field 'format_version' is {man['format_version']}, expected {FORMAT_VERSION}")
    fmt = man.get("matrix_format", "MOCMMAT1")
    T, V, C = int(man["T"]), int(man["V_org"]), int(man["C"])
    if len(man["subjects"]) != int(man["S"]):
        raise DatasetError(f"{mpath}: field 'S' is {man['S']} but {len(man['subjects'])} subjects are listed")
    scans = []
    for entry in man["subjects"]:
        for key in ("id", "F", "tau"):
            if key not in entry:
                raise DatasetError(f"{mpath}: subject entry missing field '{key}'")
        f_path, t_path = path / entry["F"], path / entry["tau"]
        for p in (f_path, t_path):
            if not p.exists():
                raise DatasetError(f"{p}: subject file referenced by manifest not found")
        try:
            if fmt == "csv":
                F = matfile.read_matrix_csv(f_path)
                tau = matfile.read_onsets_csv(t_path, F.shape[0], C)
            else:
                F = matfile.read_matrix(f_path)
                tau = matfile.read_matrix(t_path)
        except matfile.FormatError as exc:
            raise DatasetError(str(exc)) from exc
        if F.shape != (T, V):
            raise DatasetError(f"{f_path}: shape {F.shape} does not match manifest T={T}, V_org={V}")
        if tau.shape != (T, C):
            raise DatasetError(f"{t_path}: shape {tau.shape} does not match manifest T={T}, C={C}")
        scans.append(SubjectScan(entry["id"], F, tau))
    return Dataset(scans, C, float(man["TR"]), list(man.get("category_names") or []))
