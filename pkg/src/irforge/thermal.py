"""Intrinsic thermal variability of target signatures.

A view bundle holds the ambient (TA) and operational (TF) signatures of one
target seen from one aspect, plus a label map splitting the silhouette into
regions with independent thermal behaviour. Intermediate signatures are
per-region linear blends ``(1 - lam) * TA + lam * TF``; ``lam`` is drawn from
a mode-dependent law.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AssetError, DimensionMismatch, MissingRegionLambda, SamplerStuck
from .imagecore import as_image, load_image, load_labels, save_raster
from .seeding import derive_rng

# Label codes used in regions.png. 0 is always "not target".
REGION_CODES = {
    "engine": 1,
    "body": 2,
    "muffler": 3,
    "windows": 4,
    "tires": 5,
}
REGION_NAMES = {code: name for name, code in REGION_CODES.items()}

MAX_REJECTION_ROUNDS = 1000


class Mode(str, enum.Enum):
    AMBIENT = "ambient"
    INTERMEDIATE = "intermediate"
    OPERATING = "operating"

    @property
    def interval(self):
        """Nominal (low, high, closed_low, closed_high) interval of the mode."""
        return _INTERVALS[self]

    def contains(self, lam):
        lo, hi, closed_lo, closed_hi = _INTERVALS[self]
        lam = np.asarray(lam)
        above = lam >= lo if closed_lo else lam > lo
        below = lam <= hi if closed_hi else lam < hi
        return above & below


_INTERVALS = {
    Mode.AMBIENT: (0.0, 0.1, True, True),
    Mode.INTERMEDIATE: (0.1, 0.9, False, False),
    Mode.OPERATING: (0.9, 1.0, True, True),
}


@dataclass(frozen=True)
class LambdaLaw:
    """Gaussian (half-Gaussian at the extremities) law of the variability rate.

    ``sigma`` is a third of the mode interval's half-width for the centred
    law, and a third of the interval width for the half-Gaussians.
    """

    mode: Mode
    center: float
    sigma: float

    def pdf(self, lam):
        """Unnormalised-on-[0, 1] Gaussian density around ``center``."""
        lam = np.asarray(lam, dtype=float)
        z = (lam - self.center) / self.sigma
        return np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi * self.sigma**2)


LAWS = {
    Mode.AMBIENT: LambdaLaw(Mode.AMBIENT, 0.0, 0.1 / 3),
    Mode.INTERMEDIATE: LambdaLaw(Mode.INTERMEDIATE, 0.5, 0.4 / 3),
    Mode.OPERATING: LambdaLaw(Mode.OPERATING, 1.0, 0.1 / 3),
}


def parse_mode(value) -> Mode:
    try:
        return Mode(value)
    except ValueError:
        raise ValueError(f"unknown thermal mode {value!r}; expected one of {[m.value for m in Mode]}") from None


@dataclass
class ViewBundle:
    ta: np.ndarray
    tf: np.ndarray
    regions: np.ndarray
    view_id: str = ""
    region_table: dict = field(default_factory=lambda: dict(REGION_NAMES))

    def __post_init__(self):
        self.ta = as_image(self.ta, "ta")
        self.tf = as_image(self.tf, "tf")
        self.regions = np.asarray(self.regions).astype(np.uint8)
        if not (self.ta.shape == self.tf.shape == self.regions.shape):
            raise DimensionMismatch(
                f"bundle shapes differ: ta {self.ta.shape}, tf {self.tf.shape}, regions {self.regions.shape}"
            )
        unknown = set(np.unique(self.regions).tolist()) - {0} - set(self.region_table)
        if unknown:
            raise AssetError(f"label codes {sorted(unknown)} missing from the region table")
        bad_names = set(self.region_table.values()) - set(REGION_CODES)
        if bad_names:
            raise AssetError(f"unknown region names {sorted(bad_names)}")

    @property
    def silhouette(self) -> np.ndarray:
        return self.regions > 0

    @property
    def present_regions(self) -> list:
        """Names of the regions actually painted in the label map, in code order."""
        codes = sorted(set(np.unique(self.regions).tolist()) - {0})
        return [self.region_table[c] for c in codes]


def load_bundle(path, view_id=None) -> ViewBundle:
    """Load ``ta.png``, ``tf.png``, ``regions.png`` and ``regions.json`` from a directory."""
    path = Path(path)
    if not path.is_dir():
        raise AssetError(f"{path}: bundle directory not found")
    table_path = path / "regions.json"
    if table_path.is_file():
        try:
            raw = json.loads(table_path.read_text())
            table = {int(code): str(name) for code, name in raw.items()}
        except (ValueError, AttributeError) as exc:
            raise AssetError(f"{table_path}: {exc}") from exc
    else:
        table = dict(REGION_NAMES)
    for name in ("ta.png", "tf.png", "regions.png"):
        if not (path / name).is_file():
            raise AssetError(f"{path}: missing {name}")
    if view_id is None:
        view_id = f"{path.parent.name}/{path.name}"
    return ViewBundle(
        ta=load_image(path / "ta.png"),
        tf=load_image(path / "tf.png"),
        regions=load_labels(path / "regions.png"),
        view_id=view_id,
        region_table=table,
    )


def save_bundle(path, bundle: ViewBundle) -> None:
    """Write a bundle; TA/TF are rounded to 16-bit counts."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, img in (("ta.png", bundle.ta), ("tf.png", bundle.tf)):
        save_raster(path / name, np.clip(np.rint(img), 0, 65535).astype(np.uint16))
    save_raster(path / "regions.png", bundle.regions.astype(np.uint8))
    table = {str(code): name for code, name in sorted(bundle.region_table.items())}
    (path / "regions.json").write_text(json.dumps(table, indent=2) + "\n")


def mix(bundle: ViewBundle, state: dict) -> np.ndarray:
    """Blend TA and TF region by region. Non-target pixels are 0."""
    out = np.zeros_like(bundle.ta)
    for code in sorted(set(np.unique(bundle.regions).tolist()) - {0}):
        name = bundle.region_table[code]
        if name not in state:
            raise MissingRegionLambda(f"no lambda for region {name!r}")
        lam = float(state[name])
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda for {name!r} must lie in [0, 1], got {lam}")
        sel = bundle.regions == code
        out[sel] = (1.0 - lam) * bundle.ta[sel] + lam * bundle.tf[sel]
    return out


def sample_lambdas(mode, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` variability rates for ``mode``, rejection-resampled into [0, 1]."""
    mode = parse_mode(mode)
    law = LAWS[mode]
    out = np.empty(size, dtype=np.float64)
    todo = np.arange(size)
    for _ in range(MAX_REJECTION_ROUNDS):
        if todo.size == 0:
            return out
        if mode is Mode.AMBIENT:
            draw = np.abs(rng.normal(0.0, law.sigma, todo.size))
        elif mode is Mode.OPERATING:
            draw = 1.0 - np.abs(rng.normal(0.0, law.sigma, todo.size))
        else:
            draw = rng.normal(law.center, law.sigma, todo.size)
        ok = (draw >= 0.0) & (draw <= 1.0)
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    if todo.size:
        raise SamplerStuck(f"{todo.size} draws still outside [0, 1] after {MAX_REJECTION_ROUNDS} rounds")
    return out


def sample_lambda(mode, rng: np.random.Generator) -> float:
    return float(sample_lambdas(mode, 1, rng)[0])


def draw_state(modes: dict, rng: np.random.Generator) -> dict:
    """One independent draw per region. Regions are visited in label-code order."""
    order = sorted(modes, key=lambda name: (REGION_CODES.get(name, 99), name))
    return {name: sample_lambda(modes[name], rng) for name in order}


def expand_database(bundle: ViewBundle, configs, n_per_config: int, seed: int, lambda_override=None):
    """Mixed signatures for every config, ``n_per_config`` each.

    Item ``i`` draws from its own generator derived from ``(seed, i)``, so the
    result does not depend on evaluation order. Returns a list of
    ``(image, state, config_index)`` tuples.
    """
    if n_per_config < 1:
        raise ValueError("n_per_config must be >= 1")
    out = []
    index = 0
    for ci, modes in enumerate(configs):
        missing = [r for r in bundle.present_regions if r not in modes]
        if missing:
            raise MissingRegionLambda(f"config {ci} has no mode for regions {missing}")
        for _ in range(n_per_config):
            if lambda_override is not None:
                state = {name: float(lambda_override) for name in modes}
            else:
                state = draw_state(modes, derive_rng(seed, "expand", index))
            out.append((mix(bundle, state), state, ci))
            index += 1
    return out
