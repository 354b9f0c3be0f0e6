"""Link-level Monte Carlo engine for training + estimation + beamforming.

The engine works in the channel covariance eigenbasis: the true channel,
every estimator state and every SINR functional are exact there, and the
dimension drops from the antenna count to the numerical covariance rank.

Scheme kinds
------------
diag     matched tracker sounding true covariance eigenvectors (the
         designed sequences, mp_fixed, nd_fixed)
full     arbitrary fixed training columns through the full-matrix Kalman
         recursion: the orthogonal / random baselines, and the hybrid
         variants whose sounding directions are the designed DFT columns
         while the tracker keeps the true covariance knowledge
perfect  genie channel knowledge

Determinism: every Monte Carlo run owns spawned RNG streams (one for the
channel, one per scheme), runs are processed in fixed-size chunks, and
chunk partial sums are reduced in run-index order, so results are
byte-identical for any thread count.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from . import multiuser as mu
from .channel_model import (
    ArrayGeometry,
    OneRingGeometry,
    build_covariance,
    dft_approximation,
    dft_approximation_upa,
    eigendecompose,
    path_loss,
    temporal_coefficient,
)
from .config import ExperimentConfig
from .sequence_design import (
    FrameParams,
    IntervalAssignment,
    SequenceMatrix,
    construct_sequence_matrix,
    exhaustive_search,
    min_max_design,
)
from .steady_state import profile as ss_profile

CHUNK_RUNS = 32  # fixed Monte Carlo chunk size; independent of thread count

_DESIGNERS = {"min_max": min_max_design, "exhaustive": exhaustive_search}


@dataclass
class ChannelScene:
    """Simulation-ready channel description for one user."""

    a: float
    u_sim: np.ndarray  # n_t x r_sim eigenvectors (loose truncation)
    lam_sim: np.ndarray  # r_sim, descending
    r_design: int  # modes above the design-grade rank threshold
    gamma: float
    axes: tuple | None  # per-axis covariances for a planar array

    @property
    def r_sim(self) -> int:
        return len(self.lam_sim)

    def trace(self) -> float:
        return float(self.lam_sim.sum())


def build_scene(
    array: ArrayGeometry,
    ring: OneRingGeometry,
    block_len: int,
    rank_tol: float = 1e-6,
    sim_rank_tol: float = 1e-12,
) -> ChannelScene:
    """Eigensystem at a loose tolerance (simulation space) plus the design
    rank at the user-facing tolerance."""
    a = temporal_coefficient(ring, block_len)
    r_h, axes = build_covariance(array, ring)
    u, lam, _ = eigendecompose(r_h, min(sim_rank_tol, rank_tol))
    r_design = int(np.count_nonzero(lam > rank_tol * lam[0]))
    return ChannelScene(a=a, u_sim=u, lam_sim=lam, r_design=r_design,
                        gamma=path_loss(ring), axes=axes)


@dataclass
class SchemePlan:
    """Precomputed per-scheme data: schedule, gains and deterministic traces."""

    name: str
    kind: str  # diag | full | perfect
    m_p: int
    sched: np.ndarray | None = None  # (horizon, m_p) mode/column indices
    gains: np.ndarray | None = None  # (horizon, m_p) scalar gains (diag)
    kgains: np.ndarray | None = None  # (horizon, r, m_p) Kalman gains (full)
    s_u: np.ndarray | None = None  # (r, n_cols) training columns in U coords
    dim: int = 0  # estimator state dimension
    nmse: np.ndarray | None = None  # (horizon,) NMSE trace
    det_sinr: np.ndarray | None = None  # (horizon,) deterministic equivalent
    lb_sinr: float | None = None  # steady-state lower bound
    assignment: IntervalAssignment | None = None
    seq: SequenceMatrix | None = None


def _horizon_schedule(cycle: np.ndarray, horizon: int) -> np.ndarray:
    reps = -(-horizon // cycle.shape[0])
    return np.tile(cycle, (reps, 1))[:horizon]


def _round_robin_cycle(n_cols: int, m_p: int) -> np.ndarray:
    """Cycle columns m_p at a time, wrapping over n_cols."""
    if n_cols < m_p:
        raise ValueError(
            f"cannot sound {m_p} distinct columns per block from a "
            f"{n_cols}-column basis"
        )
    length = n_cols // np.gcd(n_cols, m_p)
    flat = (np.arange(length * m_p)) % n_cols
    return flat.reshape(length, m_p)


def _diag_deterministic(plan: SchemePlan, lam_model, lam_true, a, rho, horizon):
    """Matched diagonal recursion: per-block gains, NMSE and the
    single-user deterministic SINR trace."""
    lam_pred = lam_model.astype(float).copy()
    trace_total = float(lam_true.sum())
    gains = np.zeros((horizon, plan.m_p))
    nmse = np.zeros(horizon)
    det = np.zeros(horizon)
    sqrt_rho = np.sqrt(rho)
    for ell in range(horizon):
        idx = plan.sched[ell]
        pred = lam_pred[idx]
        gains[ell] = sqrt_rho * pred / (1.0 + rho * pred)
        lam_bar = lam_pred.copy()
        lam_bar[idx] = pred / (1.0 + rho * pred)
        err = float(lam_bar.sum())
        s = trace_total - err
        b = float(np.sum(lam_bar * (lam_true - lam_bar)))
        nmse[ell] = err / trace_total
        det[ell] = s * s / (s / rho + b) if s > 0 else 0.0
        lam_pred = a * a * lam_bar + (1.0 - a * a) * lam_true
    plan.gains = gains
    plan.nmse = nmse
    plan.det_sinr = det


def _full_deterministic(plan: SchemePlan, lam_true, a, rho, horizon):
    """Full-matrix covariance recursion in eigencoordinates; stores the
    per-block Kalman gains for the Monte Carlo pass."""
    r = len(lam_true)
    p = np.diag(lam_true).astype(complex)
    lam_diag = np.diag(lam_true)
    trace_total = float(lam_true.sum())
    kgains = np.zeros((horizon, r, plan.m_p), dtype=complex)
    nmse = np.zeros(horizon)
    det = np.zeros(horizon)
    sqrt_rho = np.sqrt(rho)
    for ell in range(horizon):
        s = sqrt_rho * plan.s_u[:, plan.sched[ell]]
        ps = p @ s
        gram = s.conj().T @ ps + np.eye(plan.m_p)
        k = np.linalg.solve(gram.conj().T, ps.conj().T).conj().T
        p = p - k @ ps.conj().T
        p = 0.5 * (p + p.conj().T)
        kgains[ell] = k
        err = float(np.real(np.trace(p)))
        cap = trace_total - err
        b = float(np.real(np.sum(np.diag(p) * lam_true) - np.sum(np.abs(p) ** 2)))
        nmse[ell] = err / trace_total
        det[ell] = cap * cap / (cap / rho + max(b, 0.0)) if cap > 0 else 0.0
        p = a * a * p + (1.0 - a * a) * lam_diag
    plan.kgains = kgains
    plan.nmse = nmse
    plan.det_sinr = det


def _single_user_lb(lam_sim, g_padded, a, rho) -> float:
    prof = ss_profile(lam_sim, a, rho, g_padded)
    cap = prof.lam - prof.lambda_upper
    s_min = float(cap.sum())
    if s_min <= 0:
        return 0.0
    b_max = float(np.sum(prof.lambda_upper * (prof.lam - prof.lambda_lower)))
    return s_min * s_min / (s_min / rho + b_max)


def build_single_user_plans(
    scene: ChannelScene,
    frame: FrameParams,
    horizon: int,
    schemes,
    rng_scene: np.random.Generator,
) -> list[SchemePlan]:
    """Instantiate and precompute every requested scheme.

    schemes: iterable of names among min_max, exhaustive, min_max_dft,
    exhaustive_dft, mp_fixed, nd_fixed, orthogonal, random, perfect_csit.
    """
    lam = scene.lam_sim
    lam_design = lam[: scene.r_design]
    a, rho, m_p = scene.a, frame.rho, frame.m_p
    n_t = scene.u_sim.shape[0]
    plans = []
    for name in schemes:
        if name in ("min_max", "exhaustive"):
            asn = _DESIGNERS[name](lam_design, a, rho, frame)
            seq = construct_sequence_matrix(asn, frame)
            plan = SchemePlan(name=name, kind="diag", m_p=m_p, dim=scene.r_sim,
                              assignment=asn, seq=seq)
            plan.sched = _horizon_schedule(seq.c - 1, horizon)
            _diag_deterministic(plan, lam, lam, a, rho, horizon)
            plan.lb_sinr = _single_user_lb(lam, _pad_g(asn, scene.r_sim), a, rho)
        elif name in ("min_max_dft", "exhaustive_dft"):
            # hybrid variant: sounding directions are restricted to the DFT
            # surrogate basis (the analog pre-beamformer), the sequence is
            # designed on the DFT-projected spectrum, and the tracker keeps
            # the true covariance knowledge
            basis = _scene_dft_basis(scene)
            asn = _DESIGNERS[name.replace("_dft", "")](basis.lambda_tilde, a, rho, frame)
            seq = construct_sequence_matrix(asn, frame)
            plan = SchemePlan(name=name, kind="full", m_p=m_p, dim=scene.r_sim,
                              assignment=asn, seq=seq,
                              s_u=scene.u_sim.conj().T @ basis.f_tilde)
            plan.sched = _horizon_schedule(seq.c - 1, horizon)
            _full_deterministic(plan, lam, a, rho, horizon)
        elif name == "mp_fixed":
            plan = SchemePlan(name=name, kind="diag", m_p=m_p, dim=scene.r_sim)
            plan.sched = _horizon_schedule(np.arange(m_p)[None, :], horizon)
            _diag_deterministic(plan, lam, lam, a, rho, horizon)
            asn = IntervalAssignment(g=(1,) * m_p, n_d=m_p, objective=0.0)
            plan.lb_sinr = _single_user_lb(lam, _pad_g(asn, scene.r_sim), a, rho)
        elif name == "nd_fixed":
            n_sel = min(frame.n_d_max, scene.r_sim)
            plan = SchemePlan(name=name, kind="diag", m_p=m_p, dim=scene.r_sim)
            plan.sched = _horizon_schedule(_round_robin_cycle(n_sel, m_p), horizon)
            _diag_deterministic(plan, lam, lam, a, rho, horizon)
            if n_sel == frame.g_len * m_p:
                asn = IntervalAssignment(g=(frame.g_len,) * n_sel, n_d=n_sel,
                                         objective=0.0)
                plan.lb_sinr = _single_user_lb(lam, _pad_g(asn, scene.r_sim), a, rho)
        elif name == "orthogonal":
            grid = np.arange(n_t)
            dft = np.exp(-2j * np.pi * np.outer(grid, grid) / n_t) / np.sqrt(n_t)
            plan = SchemePlan(name=name, kind="full", m_p=m_p, dim=scene.r_sim,
                              s_u=scene.u_sim.conj().T @ dft)
            plan.sched = _horizon_schedule(_round_robin_cycle(n_t, m_p), horizon)
            _full_deterministic(plan, lam, a, rho, horizon)
        elif name == "random":
            cols = rng_scene.standard_normal((n_t, n_t)) + 1j * rng_scene.standard_normal((n_t, n_t))
            cols /= np.linalg.norm(cols, axis=0, keepdims=True)
            plan = SchemePlan(name=name, kind="full", m_p=m_p, dim=scene.r_sim,
                              s_u=scene.u_sim.conj().T @ cols)
            plan.sched = _horizon_schedule(_round_robin_cycle(n_t, m_p), horizon)
            _full_deterministic(plan, lam, a, rho, horizon)
        elif name == "perfect_csit":
            plan = SchemePlan(name=name, kind="perfect", m_p=m_p, dim=0)
            plan.nmse = np.zeros(horizon)
            s = float(lam.sum())
            plan.det_sinr = np.full(horizon, rho * s)
        else:
            raise ValueError(f"unknown scheme {name!r}")
        plans.append(plan)
    return plans


def _pad_g(asn: IntervalAssignment, r_sim: int) -> np.ndarray:
    out = np.zeros(r_sim, dtype=int)
    out[: asn.n_d] = asn.g
    return out


def _scene_dft_basis(scene: ChannelScene):
    r_target = scene.r_design
    if scene.axes is None:
        # rebuild the covariance from the eigensystem; exact to truncation
        r_h = (scene.u_sim * scene.lam_sim) @ scene.u_sim.conj().T
        return dft_approximation(r_h, r_target)
    return dft_approximation_upa(scene.axes[0], scene.axes[1], r_target)


def baseline_training(
    scheme: str,
    block: int,
    stats,
    frame: FrameParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Antenna-domain training matrix S_ell of a baseline scheme at a block.

    orthogonal: columns of the fixed N_t-point DFT unitary, cycled M_p at a
    time.  random: a fixed set of N_t isotropic unit vectors, cycled; the
    set is drawn deterministically from ``rng``, so pass a generator seeded
    identically on every call (it is consumed in full each time).
    mp_fixed / nd_fixed: the strongest covariance eigenvectors, fixed or
    cycled.  All outputs satisfy S^H S = rho * I.
    """
    n_t = stats.u.shape[0]
    m_p = frame.m_p
    if scheme == "orthogonal":
        grid = np.arange(n_t)
        cols = np.exp(-2j * np.pi * np.outer(grid, grid) / n_t) / np.sqrt(n_t)
    elif scheme == "random":
        cols = rng.standard_normal((n_t, n_t)) + 1j * rng.standard_normal((n_t, n_t))
        cols /= np.linalg.norm(cols, axis=0, keepdims=True)
    elif scheme == "mp_fixed":
        return np.sqrt(frame.rho) * stats.u[:, :m_p]
    elif scheme == "nd_fixed":
        n_sel = min(frame.n_d_max, stats.u.shape[1])
        idx = (block * m_p + np.arange(m_p)) % n_sel
        return np.sqrt(frame.rho) * stats.u[:, idx]
    else:
        raise ValueError(f"unknown baseline scheme {scheme!r}")
    idx = (block * m_p + np.arange(m_p)) % n_t
    return np.sqrt(frame.rho) * cols[:, idx]


# -- Monte Carlo ----------------------------------------------------------


def _complex_rows(gen, shape):
    z = gen.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def _chunk_single_user(seed_seqs, plans, lam, a, rho, horizon, prelog):
    """Simulate one chunk of runs through every scheme; returns per-scheme
    per-block partial sums of the realized SINR and spectral efficiency."""
    n_runs = len(seed_seqs)
    r = len(lam)
    sqrt_lam = np.sqrt(lam)
    sqrt_rho = np.sqrt(rho)
    evolve = np.sqrt(1.0 - a * a)

    c_ch = np.empty((n_runs, r), dtype=complex)
    proc = np.empty((n_runs, horizon, r), dtype=complex)
    meas = []
    for i, seq in enumerate(seed_seqs):
        streams = seq.spawn(1 + len(plans))
        gen = np.random.Generator(np.random.PCG64(streams[0]))
        z = _complex_rows(gen, (horizon + 1, r))
        c_ch[i] = z[0] * sqrt_lam
        proc[i] = z[1:] * sqrt_lam
        row = []
        for k, plan in enumerate(plans):
            if plan.kind == "perfect":
                row.append(None)
                continue
            g_k = np.random.Generator(np.random.PCG64(streams[1 + k]))
            row.append(_complex_rows(g_k, (horizon, plan.m_p)))
        meas.append(row)
    meas = [
        None if meas[0][k] is None else np.stack([meas[i][k] for i in range(n_runs)])
        for k in range(len(plans))
    ]

    states = []
    for plan in plans:
        states.append(None if plan.kind == "perfect" else np.zeros((n_runs, plan.dim), dtype=complex))

    sinr_sum = {p.name: np.zeros(horizon) for p in plans}
    se_sum = {p.name: np.zeros(horizon) for p in plans}

    for ell in range(horizon):
        for k, plan in enumerate(plans):
            chat = states[k]
            if plan.kind == "diag":
                idx = plan.sched[ell]
                y = sqrt_rho * c_ch[:, idx] + meas[k][:, ell, :]
                chat[:, idx] += plan.gains[ell] * (y - sqrt_rho * chat[:, idx])
                h_dot = np.einsum("ij,ij->i", c_ch.conj(), chat)
                nrm2 = np.einsum("ij,ij->i", chat.conj(), chat).real
            elif plan.kind == "full":
                s_cols = sqrt_rho * plan.s_u[:, plan.sched[ell]]
                y = c_ch @ s_cols.conj() + meas[k][:, ell, :]
                chat += (y - chat @ s_cols.conj()) @ plan.kgains[ell].T
                h_dot = np.einsum("ij,ij->i", c_ch.conj(), chat)
                nrm2 = np.einsum("ij,ij->i", chat.conj(), chat).real
            else:  # perfect
                nrm2 = np.einsum("ij,ij->i", c_ch.conj(), c_ch).real
                h_dot = nrm2
            err_dot = h_dot - nrm2
            with np.errstate(divide="ignore", invalid="ignore"):
                sinr = np.where(
                    nrm2 > 0.0,
                    nrm2**2 / (nrm2 / rho + np.abs(err_dot) ** 2),
                    0.0,
                )
            sinr_sum[plan.name][ell] += sinr.sum()
            se_sum[plan.name][ell] += (prelog * np.log2(1.0 + sinr)).sum()
        for k, plan in enumerate(plans):
            if states[k] is not None:
                states[k] *= a
        c_ch = a * c_ch + evolve * proc[:, ell, :]
    return sinr_sum, se_sum


@dataclass
class TraceTable:
    """Per-block metrics for every scheme of one experiment."""

    schemes: list
    horizon: int
    frame: FrameParams
    nmse: dict
    rx_snr_db: dict
    se_mc: dict
    se_det: dict
    se_lb: dict
    sinr_mc: dict = field(default_factory=dict)
    det_sinr: dict = field(default_factory=dict)

    def steady_state(self, key: str, scheme: str, frames: int = 2) -> float:
        tail = self.frame.g_len * frames
        return float(np.mean(getattr(self, key)[scheme][-tail:]))


def run_schemes(
    scene: ChannelScene,
    frame: FrameParams,
    schemes,
    mc_runs: int,
    seed: int,
    horizon: int,
    threads: int = 1,
) -> TraceTable:
    """Deterministic traces plus Monte Carlo averages for a scheme list."""
    root = np.random.SeedSequence(seed)
    scene_ss, runs_ss = root.spawn(2)
    rng_scene = np.random.Generator(np.random.PCG64(scene_ss))
    plans = build_single_user_plans(scene, frame, horizon, schemes, rng_scene)

    prelog = 1.0 - frame.m_p / frame.m
    run_seqs = runs_ss.spawn(mc_runs)
    chunks = [run_seqs[i:i + CHUNK_RUNS] for i in range(0, mc_runs, CHUNK_RUNS)]

    def work(chunk):
        return _chunk_single_user(chunk, plans, scene.lam_sim, scene.a,
                                  frame.rho, horizon, prelog)

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(chunk) for chunk in chunks]

    sinr_mc = {p.name: np.zeros(horizon) for p in plans}
    se_mc = {p.name: np.zeros(horizon) for p in plans}
    for sinr_part, se_part in results:
        for name in sinr_mc:
            sinr_mc[name] += sinr_part[name]
            se_mc[name] += se_part[name]
    for name in sinr_mc:
        sinr_mc[name] /= mc_runs
        se_mc[name] /= mc_runs

    table = TraceTable(
        schemes=[p.name for p in plans],
        horizon=horizon,
        frame=frame,
        nmse={p.name: p.nmse for p in plans},
        rx_snr_db={name: 10.0 * np.log10(np.maximum(vals, 1e-300)) for name, vals in sinr_mc.items()},
        se_mc=se_mc,
        se_det={p.name: prelog * np.log2(1.0 + p.det_sinr) for p in plans},
        se_lb={p.name: (None if p.lb_sinr is None else prelog * np.log2(1.0 + p.lb_sinr))
               for p in plans},
        sinr_mc=sinr_mc,
        det_sinr={p.name: p.det_sinr for p in plans},
    )
    table.plans = plans
    return table


def run_single_user(config: ExperimentConfig) -> TraceTable:
    """Full single-user experiment from a configuration document."""
    scene = build_scene(config.array.build(), config.ring.build(),
                        config.frame.m, config.rank_tol)
    frame = config.frame.build()
    schemes = [config.designer if config.basis == "eigen" else config.designer + "_dft"]
    schemes += [b for b in config.baselines if b not in schemes]
    return run_schemes(scene, frame, schemes, config.mc_runs, config.seed,
                       config.horizon_blocks, config.threads)


# -- multiuser ------------------------------------------------------------

MU_SCHEMES = ("min_max", "exhaustive", "mp_fixed", "nd_fixed", "perfect_csit")


@dataclass
class UserPlans:
    """Per-user channel description and per-scheme diagonal plans."""

    stats: mu.ChannelStatistics  # reuse of the statistics container
    plans: dict


def _build_user_plans(scene: ChannelScene, frame: FrameParams, horizon, schemes):
    from .channel_model import ChannelStatistics

    stats = ChannelStatistics(
        a=scene.a,
        r_h=(scene.u_sim * scene.lam_sim) @ scene.u_sim.conj().T,
        u=scene.u_sim,
        lam=scene.lam_sim,
        rank=scene.r_sim,
    )
    plans = {}
    rng_dummy = np.random.Generator(np.random.PCG64(0))  # diag schemes draw nothing
    for name in schemes:
        if name not in MU_SCHEMES:
            raise ValueError(
                f"scheme {name!r} is not available in the multiuser path; "
                f"choose among {MU_SCHEMES}"
            )
        plan = build_single_user_plans(scene, frame, horizon, [name], rng_dummy)[0]
        plans[name] = plan
    return UserPlans(stats=stats, plans=plans)


def _diag_lambda_trace(plan: SchemePlan, lam, a, rho, horizon):
    """Posterior eigenmode variance trajectory for one diagonal plan."""
    if plan.kind == "perfect":
        return np.zeros((horizon, len(lam)))
    out = np.empty((horizon, len(lam)))
    lam_pred = lam.astype(float).copy()
    for ell in range(horizon):
        idx = plan.sched[ell]
        lam_bar = lam_pred.copy()
        lam_bar[idx] = lam_pred[idx] / (1.0 + rho * lam_pred[idx])
        out[ell] = lam_bar
        lam_pred = a * a * lam_bar + (1.0 - a * a) * lam
    return out


def _chunk_multiuser(seed_seqs, users, scheme_names, horizon, rho, prelog, cross):
    """Chunk of multiuser runs; returns per-scheme (horizon, U) partial sums
    of realized SINR and spectral efficiency."""
    n_runs = len(seed_seqs)
    n_users = len(users)
    lam_u = [u.stats.lam for u in users]
    sqrt_rho = np.sqrt(rho)
    a_u = [u.stats.a for u in users]
    evolve_u = [np.sqrt(1.0 - a * a) for a in a_u]

    c_ch = [np.empty((n_runs, len(lam))) * 0j for lam in lam_u]
    proc = [np.empty((n_runs, horizon, len(lam)), dtype=complex) for lam in lam_u]
    meas = {name: [np.empty((n_runs, horizon, users[0].plans[name].m_p), dtype=complex)
                   if users[0].plans[name].kind != "perfect" else None
                   for _ in range(n_users)]
            for name in scheme_names}
    for i, seq in enumerate(seed_seqs):
        streams = seq.spawn(n_users * (1 + len(scheme_names)))
        for u in range(n_users):
            gen = np.random.Generator(np.random.PCG64(streams[u]))
            z = _complex_rows(gen, (horizon + 1, len(lam_u[u])))
            c_ch[u][i] = z[0] * np.sqrt(lam_u[u])
            proc[u][i] = z[1:] * np.sqrt(lam_u[u])
        pos = n_users
        for name in scheme_names:
            for u in range(n_users):
                plan = users[u].plans[name]
                if plan.kind != "perfect":
                    gen = np.random.Generator(np.random.PCG64(streams[pos]))
                    meas[name][u][i] = _complex_rows(gen, (horizon, plan.m_p))
                pos += 1

    states = {
        name: [
            None if users[u].plans[name].kind == "perfect"
            else np.zeros((n_runs, users[u].plans[name].dim), dtype=complex)
            for u in range(n_users)
        ]
        for name in scheme_names
    }
    sinr_sum = {name: np.zeros((horizon, n_users)) for name in scheme_names}
    se_sum = {name: np.zeros((horizon, n_users)) for name in scheme_names}

    for ell in range(horizon):
        for name in scheme_names:
            hats = []
            for u in range(n_users):
                plan = users[u].plans[name]
                if plan.kind == "perfect":
                    hats.append(c_ch[u])
                    continue
                chat = states[name][u]
                idx = plan.sched[ell]
                y = sqrt_rho * c_ch[u][:, idx] + meas[name][u][:, ell, :]
                chat[:, idx] += plan.gains[ell] * (y - sqrt_rho * chat[:, idx])
                hats.append(chat)
            nrm2 = [np.einsum("ij,ij->i", h.conj(), h).real for h in hats]
            for u in range(n_users):
                self_dot = np.einsum("ij,ij->i", c_ch[u].conj(), hats[u])
                sigma = n_users * nrm2[u] / rho + np.abs(self_dot - nrm2[u]) ** 2
                for v in range(n_users):
                    if v == u:
                        continue
                    mixed = hats[v] @ cross[(u, v)].T  # into user u coordinates
                    dot_uv = np.einsum("ij,ij->i", c_ch[u].conj(), mixed)
                    with np.errstate(divide="ignore", invalid="ignore"):
                        ratio = np.where(nrm2[v] > 0, nrm2[u] / nrm2[v], 0.0)
                    sigma += ratio * np.abs(dot_uv) ** 2
                with np.errstate(divide="ignore", invalid="ignore"):
                    sinr = np.where(nrm2[u] > 0, nrm2[u] ** 2 / sigma, 0.0)
                sinr_sum[name][ell, u] += sinr.sum()
                se_sum[name][ell, u] += (prelog * np.log2(1.0 + sinr)).sum()
        for name in scheme_names:
            for u in range(n_users):
                if states[name][u] is not None:
                    states[name][u] *= a_u[u]
        for u in range(n_users):
            c_ch[u] = a_u[u] * c_ch[u] + evolve_u[u] * proc[u][:, ell, :]
    return sinr_sum, se_sum


@dataclass
class MultiuserTable:
    """Per-block multiuser traces plus per-user steady-state summaries."""

    schemes: list
    horizon: int
    frame: FrameParams
    n_users: int
    nmse: dict  # mean NMSE over users, per block
    sinr_mc: dict  # (horizon, U) Monte Carlo mean SINR
    sinr_det: dict  # (horizon, U) deterministic equivalents
    se_mc_runs: dict  # (horizon, U) Monte Carlo mean spectral efficiency
    se_user_lb: dict  # (U,) steady-state lower bounds (nan if undefined)
    prelog: float = 0.0

    def se_mc(self, scheme):
        return self.se_mc_runs[scheme]

    def se_det(self, scheme):
        return self.prelog * np.log2(1.0 + self.sinr_det[scheme])

    def se_lb(self, scheme):
        return self.prelog * np.log2(1.0 + self.se_user_lb[scheme])

    def se_det_ss(self, scheme):
        """Spectral efficiency at the converged (steady-state) deterministic
        SINR; nan for schemes without a closed-form steady state."""
        return self.prelog * np.log2(1.0 + self.sinr_det_ss[scheme])

    def steady_sum(self, which, scheme, frames: int = 2) -> float:
        tail = self.frame.g_len * frames
        if which == "mc":
            vals = self.se_mc(scheme)
        elif which == "det":
            vals = self.se_det(scheme)
        else:
            raise ValueError(which)
        return float(vals[-tail:].mean(axis=0).sum())


def run_multiuser_scene(
    scenes: list,
    frame: FrameParams,
    schemes,
    mc_runs: int,
    seed: int,
    horizon: int,
    threads: int = 1,
) -> MultiuserTable:
    """Multiuser downlink: per-user designed sounding over non-overlapping
    slots, matched-filter data transmission, worst-case-noise SINR."""
    n_users = len(scenes)
    if n_users * frame.m_p >= frame.m:
        raise ValueError("U * M_p must stay below the block length M")
    users = [_build_user_plans(s, frame, horizon, schemes) for s in scenes]
    scene_mu = mu.MultiuserScene(
        users=[mu.UserLink(stats=u.stats) for u in users],
        rho=frame.rho, m=frame.m, m_p=frame.m_p,
    )
    cross = {}
    for u in range(n_users):
        for v in range(n_users):
            if u != v:
                cross[(u, v)] = users[u].stats.u.conj().T @ users[v].stats.u

    # deterministic traces
    lam_traces = {
        name: [_diag_lambda_trace(users[u].plans[name], scenes[u].lam_sim,
                                  scenes[u].a, frame.rho, horizon)
               for u in range(n_users)]
        for name in schemes
    }
    prelog = 1.0 - n_users * frame.m_p / frame.m
    sinr_det = {name: np.zeros((horizon, n_users)) for name in schemes}
    nmse = {}
    for name in schemes:
        for ell in range(horizon):
            bars = [lam_traces[name][u][ell] for u in range(n_users)]
            for u in range(n_users):
                sinr_det[name][ell, u] = mu.deterministic_sinr(scene_mu, bars, u)
        nmse[name] = np.mean(
            [lam_traces[name][u].sum(axis=1) / scenes[u].trace() for u in range(n_users)],
            axis=0,
        )

    # steady-state quantities: the Appendix-style bound plus the converged
    # deterministic SINR evaluated at the post-training envelope state
    se_user_lb = {}
    sinr_det_ss = {}
    for name in schemes:
        lbs = np.full(n_users, np.nan)
        det_ss = np.full(n_users, np.nan)
        if name == "perfect_csit":
            bars = [np.zeros(scenes[u].r_sim) for u in range(n_users)]
            for u in range(n_users):
                det_ss[u] = mu.deterministic_sinr(scene_mu, bars, u)
        elif all(users[u].plans[name].assignment is not None for u in range(n_users)):
            profiles = [
                ss_profile(scenes[u].lam_sim, scenes[u].a, frame.rho,
                           _pad_g(users[u].plans[name].assignment, scenes[u].r_sim))
                for u in range(n_users)
            ]
            bars = [p.lambda_lower for p in profiles]
            for u in range(n_users):
                lbs[u] = mu.steady_state_sinr_lower_bound(scene_mu, profiles, u)
                det_ss[u] = mu.deterministic_sinr(scene_mu, bars, u)
        se_user_lb[name] = lbs
        sinr_det_ss[name] = det_ss

    # Monte Carlo
    root = np.random.SeedSequence(seed)
    _, runs_ss = root.spawn(2)
    run_seqs = runs_ss.spawn(mc_runs)
    chunks = [run_seqs[i:i + CHUNK_RUNS] for i in range(0, mc_runs, CHUNK_RUNS)]

    def work(chunk):
        return _chunk_multiuser(chunk, users, list(schemes), horizon, frame.rho,
                                prelog, cross)

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(chunk) for chunk in chunks]

    sinr_mc = {name: np.zeros((horizon, n_users)) for name in schemes}
    se_mc_runs = {name: np.zeros((horizon, n_users)) for name in schemes}
    for sinr_part, se_part in results:
        for name in schemes:
            sinr_mc[name] += sinr_part[name]
            se_mc_runs[name] += se_part[name]
    for name in schemes:
        sinr_mc[name] /= mc_runs
        se_mc_runs[name] /= mc_runs

    table = MultiuserTable(
        schemes=list(schemes), horizon=horizon, frame=frame, n_users=n_users,
        nmse=nmse, sinr_mc=sinr_mc, sinr_det=sinr_det, se_mc_runs=se_mc_runs,
        se_user_lb=se_user_lb, prelog=prelog,
    )
    table.user_plans = users
    table.sinr_det_ss = sinr_det_ss
    return table


def multiuser_scenes_from_config(config: ExperimentConfig):
    """Per-user channel scenes: explicit angles or sector-uniform placement."""
    n_users = config.users.count
    if config.users.theta_deg is not None:
        thetas = [float(t) for t in config.users.theta_deg]
        if len(thetas) != n_users:
            raise ValueError("users.theta_deg must list one angle per user")
    else:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            config.seed).spawn(2)[0]))
        thetas = np.degrees(rng.uniform(-np.pi / 3, np.pi / 3, size=n_users)).tolist()
    array = config.array.build()
    return [
        build_scene(array, config.ring.build(theta_h_deg=t), config.frame.m,
                    config.rank_tol)
        for t in thetas
    ], thetas


def run_multiuser(config: ExperimentConfig):
    """Multiuser experiment: one trace at the configured power plus a sweep
    over snr_sweep_db (SNR = gamma * rho) when requested.

    Returns (table, sweep_rows): the per-block table at the last operating
    point and a list of per-(snr, scheme, user) steady-state summaries.
    """
    scenes, _ = multiuser_scenes_from_config(config)
    gamma = scenes[0].gamma
    schemes = [config.designer]
    schemes += [b for b in config.baselines if b in MU_SCHEMES and b not in schemes]
    sweep = config.snr_sweep_db
    if not sweep:
        sweep = [10.0 * np.log10(gamma * config.frame.rho)]
    rows = []
    table = None
    for snr_db in sweep:
        rho = 10.0 ** (snr_db / 10.0) / gamma
        frame = FrameParams(g_len=config.frame.g, m_p=config.frame.m_p,
                            m=config.frame.m, n_d_max=config.frame.n_d, rho=rho)
        table = run_multiuser_scene(scenes, frame, schemes, config.mc_runs,
                                    config.seed, config.horizon_blocks,
                                    config.threads)
        tail = frame.g_len * 2
        for name in schemes:
            se_mc = table.se_mc(name)[-tail:].mean(axis=0)
            se_det_tail = table.se_det(name)[-tail:].mean(axis=0)
            se_det_ss = table.se_det_ss(name)
            se_lb = table.se_lb(name)
            for u in range(table.n_users):
                det = se_det_ss[u] if np.isfinite(se_det_ss[u]) else se_det_tail[u]
                rows.append(dict(
                    snr_db=float(snr_db), scheme=name, user=u,
                    se_mc=float(se_mc[u]), se_det=float(det),
                    se_lb=float(se_lb[u]),
                ))
    return table, rows
