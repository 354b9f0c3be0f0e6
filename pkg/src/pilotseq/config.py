"""Experiment configuration: a single JSON-serializable document.

Angles are degrees and speeds km/h in the file format (converted to
radians / m/s at the geometry boundary); everything else is SI.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .channel_model import ArrayGeometry, OneRingGeometry
from .sequence_design import FrameParams

DESIGNERS = ("min_max", "exhaustive")
BASES = ("eigen", "dft")
BASELINES = ("orthogonal", "random", "mp_fixed", "nd_fixed", "perfect_csit")


@dataclass
class ArrayConfig:
    kind: str = "ula"
    n_t: int = 32
    n_v: int = 1
    n_h: int = 1
    spacing_over_wavelength: float = 0.5

    def build(self) -> ArrayGeometry:
        if self.kind == "upa":
            return ArrayGeometry.upa(self.n_v, self.n_h, self.spacing_over_wavelength)
        return ArrayGeometry.ula(self.n_t, self.spacing_over_wavelength)


@dataclass
class RingConfig:
    d_s: float = 100.0
    d_r: float = 30.0
    h: float = 60.0
    d_0: float = 30.0
    alpha_0: float = 3.8
    theta_h_deg: float = 30.0
    f_c: float = 2.5e9
    t_s: float = 100e-6
    v_kmh: float = 3.0

    def build(self, theta_h_deg: float | None = None) -> OneRingGeometry:
        theta = self.theta_h_deg if theta_h_deg is None else theta_h_deg
        return OneRingGeometry(
            d_s=self.d_s, d_r=self.d_r, h=self.h, d_0=self.d_0,
            alpha_0=self.alpha_0, theta_h=np.radians(theta),
            f_c=self.f_c, t_s=self.t_s, v=self.v_kmh / 3.6,
        )


@dataclass
class FrameConfig:
    g: int = 8
    m_p: int = 2
    m: int = 5
    n_d: int = 16
    rho: float = 10.0

    def build(self) -> FrameParams:
        return FrameParams(g_len=self.g, m_p=self.m_p, m=self.m,
                           n_d_max=self.n_d, rho=self.rho)


@dataclass
class UsersConfig:
    count: int = 1
    # explicit horizontal AoAs in degrees; None = sampled uniformly in the
    # sector (-60, 60) from the experiment seed
    theta_deg: list | None = None


@dataclass
class ExperimentConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    ring: RingConfig = field(default_factory=RingConfig)
    frame: FrameConfig = field(default_factory=FrameConfig)
    designer: str = "min_max"
    basis: str = "eigen"
    baselines: list = field(default_factory=lambda: ["perfect_csit"])
    users: UsersConfig = field(default_factory=UsersConfig)
    mc_runs: int = 100
    seed: int = 12345
    horizon_blocks: int = 64
    output_dir: str = "out"
    rank_tol: float = 1e-6
    snr_sweep_db: list | None = None
    threads: int = 1

    def __post_init__(self):
        if self.designer not in DESIGNERS:
            raise ValueError(f"designer must be one of {DESIGNERS}")
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}")
        for b in self.baselines:
            if b not in BASELINES:
                raise ValueError(f"unknown baseline {b!r}; known: {BASELINES}")
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be >= 1")
        if self.horizon_blocks < self.frame.g:
            raise ValueError("horizon_blocks must cover at least one frame")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        nested = {
            "array": ArrayConfig,
            "ring": RingConfig,
            "frame": FrameConfig,
            "users": UsersConfig,
        }
        for key, cls in nested.items():
            if key in doc and isinstance(doc[key], dict):
                doc[key] = cls(**doc[key])
        return ExperimentConfig(**doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(text))

    @staticmethod
    def load(path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return ExperimentConfig.from_json(fh.read())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())


PRESETS: dict = {
    # full-scale planar array, steady-state comparison of all schemes
    "upa375": dict(
        array=dict(kind="upa", n_t=375, n_v=15, n_h=25),
        ring=dict(d_s=100.0, d_r=30.0, theta_h_deg=30.0, v_kmh=3.0),
        frame=dict(g=32, m_p=2, m=5, n_d=64, rho=10.0),
        designer="min_max",
        basis="eigen",
        baselines=["orthogonal", "random", "mp_fixed", "nd_fixed", "perfect_csit"],
        mc_runs=500,
        seed=20240,
        horizon_blocks=2560,
    ),
    # CI-scale linear array keeping the same scheme comparison
    "ci_ula32": dict(
        array=dict(kind="ula", n_t=32),
        ring=dict(d_s=100.0, d_r=30.0, theta_h_deg=30.0, v_kmh=3.0),
        frame=dict(g=16, m_p=2, m=5, n_d=32, rho=10.0),
        designer="min_max",
        basis="eigen",
        baselines=["orthogonal", "random", "mp_fixed", "nd_fixed", "perfect_csit"],
        mc_runs=200,
        seed=777,
        horizon_blocks=480,
    ),
    # multiuser sum-rate sweep on the sector ULA
    "multiuser_ula32": dict(
        array=dict(kind="ula", n_t=32),
        ring=dict(d_s=100.0, d_r=8.0, theta_h_deg=0.0, v_kmh=3.0),
        frame=dict(g=32, m_p=1, m=10, n_d=8, rho=10.0),
        designer="min_max",
        basis="eigen",
        baselines=["perfect_csit"],
        users=dict(count=5, theta_deg=None),
        mc_runs=200,
        seed=4242,
        horizon_blocks=128,
        snr_sweep_db=[-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
    ),
    # small smoke preset for quick CLI checks
    "demo": dict(
        array=dict(kind="ula", n_t=16),
        ring=dict(d_s=100.0, d_r=30.0, theta_h_deg=20.0, v_kmh=3.0),
        frame=dict(g=4, m_p=2, m=5, n_d=8, rho=10.0),
        designer="min_max",
        basis="eigen",
        baselines=["mp_fixed", "perfect_csit"],
        mc_runs=50,
        seed=1,
        horizon_blocks=64,
    ),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return ExperimentConfig.from_dict(PRESETS[name])
