"""Mild-form time evolution along characteristics and the theory-bound drivers.

One step freezes the gain and the loss frequency at the current Picard
iterate and integrates the resulting linear equation exactly along
characteristics (Duhamel / exponential integrator), so nonnegativity is
structural and the only local time error is the frozen-coefficient O(dt^2).
"""

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .collision import (CollisionIncrement, conservative_projection,
                        gain_loss_fields)
from .equilibria import compute_moments
from .geometry import KernelSpec
from .grids import (DistributionField, SphereQuadrature, TorusGrid,
                    VelocityGrid, transport_shift)


class NumericalFailure(RuntimeError):
    """Fixed-point iteration failed to converge after all dt halvings."""


@dataclass
class SolverConfig:
    alpha: float
    dt: float
    t_end: float
    kernel: KernelSpec
    quad: SphereQuadrature
    L: int = 0
    fp_tol: float = 1e-10
    fp_max_iter: int = 50
    projection: bool = True
    ordered: bool = True
    blowup_ceiling: float | None = None  # default 2^(L+20): guardrail, not science
    beta_max: float | None = None        # Jacobian bound heuristic, default gamma^-2
    chi_bound: float | None = None       # None: 1/alpha^2 for alpha > 0, off at alpha = 0
    output_every: int = 1
    max_halvings: int = 8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")

    @property
    def ceiling(self) -> float:
        if self.blowup_ceiling is not None:
            return self.blowup_ceiling
        return 2.0 ** (self.L + 20)

    def resolved_chi(self):
        if self.chi_bound is not None:
            return self.chi_bound
        return 1.0 / self.alpha ** 2 if self.alpha > 0 else np.inf


@dataclass
class TheoryConstants:
    """Constants of the local-existence estimates, computable from the data.

    c0 is the initial sup-density moment int (1+|v|^2) sup_x f0 dv. beta_max
    bounds the Jacobian of the v* -> v' change of variables; no closed form
    is available for it, so windows depending on it are heuristic.
    """

    c0: float
    b0: float
    gamma: float
    L: int
    beta_max: float | None = None
    c1: float | None = None
    c2: float | None = None

    def __post_init__(self):
        if self.beta_max is None:
            self.beta_max = self.gamma ** -2
        if self.c1 is None:
            self.c1 = 2.0 * self.c0
        if self.c2 is None:
            self.c2 = 2.0 * self.c0

    @property
    def c(self) -> float:
        """4 pi B0: the sphere-area collision constant."""
        return 4.0 * np.pi * self.b0

    @property
    def c3(self) -> float:
        """2^8 pi B0: the constant of the weighted density estimate."""
        return 2.0 ** 8 * np.pi * self.b0

    @property
    def c_bar(self) -> float:
        return 2.0 ** 8 * np.pi * self.b0 * self.beta_max

    def c_tilde(self, alpha: float) -> float:
        return 4.0 * np.pi * self.b0 * self.beta_max / alpha ** 2


def guaranteed_window(tc: TheoryConstants, alpha: float | None = None) -> dict:
    """Explicit local-existence windows; +inf when B0 = 0.

    T_uniform = min{1/(pi c0 2^(2L+6)), 1/(c_bar c1)} is alpha-independent;
    T_alpha = min{alpha^2/(4 c0 c), ln3/(2 c0 c_tilde)} and t_M1 need alpha.
    t_M2 is the window of the weighted-density bound.
    """
    inf = float("inf")
    if tc.b0 == 0.0:
        return {"T_uniform": inf, "T_alpha": inf, "t_M1": inf, "t_M2": inf}
    t_uniform = min(1.0 / (np.pi * tc.c0 * 2.0 ** (2 * tc.L + 6)),
                    1.0 / (tc.c_bar * tc.c1))
    t_m2 = 1.0 / (tc.c0 * tc.c3 * 2.0 ** (2 * tc.L + 2))
    t_m1 = inf
    t_alpha = inf
    if alpha is not None and alpha > 0:
        t_m1 = alpha ** 2 / (4.0 * tc.c0 * tc.c)
        t_alpha = min(t_m1, np.log(3.0) / (2.0 * tc.c0 * tc.c_tilde(alpha)))
    return {"T_uniform": t_uniform, "T_alpha": t_alpha,
            "t_M1": t_m1, "t_M2": t_m2}


@dataclass
class RunState:
    time: float
    field: DistributionField
    window_index: int
    threshold: float
    c0: float
    history: list = dfield(default_factory=list)
    threshold_history: list = dfield(default_factory=list)
    m1_series: list = dfield(default_factory=list)
    m2_series: list = dfield(default_factory=list)
    envelope: np.ndarray | None = None
    status: str = "ok"
    message: str = ""
    step_count: int = 0
    last_fp_iters: int = 0
    last_projection_norm: float = 0.0


def initial_sup_moment(f: DistributionField) -> float:
    """c0 = int (1 + |v|^2) sup_x f dv on the grid."""
    sup_x = f.values.max(axis=(0, 1, 2))
    w = 1.0 + f.vgrid.speed_sq
    return float(np.sum(sup_x * w)) * f.vgrid.dv ** 3


def l1_norm(f: DistributionField) -> float:
    return float(np.sum(np.abs(f.values))) * f.vgrid.dv ** 3 / f.tgrid.n_x ** 3


def l1_distance(f1: DistributionField, f2: DistributionField) -> float:
    return (float(np.sum(np.abs(f1.values - f2.values)))
            * f1.vgrid.dv ** 3 / f1.tgrid.n_x ** 3)


def _phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z, stable near 0."""
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(zs) / zs)


def fixed_point_map_C(f_prev: DistributionField, f0_field: DistributionField,
                      dt: float, cfg: SolverConfig) -> DistributionField:
    """One application of the mild-solution map: freeze gain/loss at f_prev.

    Returns the Duhamel solution at t + dt with initial slice f0_field:
    g# = f0# e^(-lam dt) + gain * dt * phi1(-lam dt), lam = nu/(1 + alpha f).
    The lam = 0 cells take the analytic limit g# = f0# + gain dt.
    """
    gain, nu = gain_loss_fields(f_prev, cfg.alpha, cfg.kernel, cfg.quad,
                                cfg.chi_bound)
    lam = nu / (1.0 + cfg.alpha * f_prev.values)
    base = transport_shift(f0_field, dt)
    # spectral transport can undershoot below zero on unresolved data
    np.maximum(base.values, 0.0, out=base.values)
    decay = np.exp(-lam * dt)
    coef = dt * _phi1(-lam * dt)
    vals = base.values * decay + gain * coef
    return DistributionField(vals, f_prev.vgrid, f_prev.tgrid)


def _project_slice(r: np.ndarray, phi: np.ndarray, wvec: np.ndarray) -> np.ndarray:
    """Weighted least-squares conservation fix of one velocity slice.

    Minimizes sum(delta^2 / w) subject to vanishing moment sums; zero-weight
    cells receive no correction. Falls back to uniform weights on the positive
    part of wvec if the weighted Gram matrix is singular.
    """
    phi_w = phi * wvec[:, None]
    gram = phi.T @ phi_w
    try:
        lam = np.linalg.solve(gram, phi.T @ r)
        if not np.all(np.isfinite(lam)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        phi_w = phi * (wvec > 0.0)[:, None]
        gram = phi.T @ phi_w
        lam = np.linalg.solve(gram, phi.T @ r)
    return r - phi_w @ lam


def _conservative_step_fix(base: np.ndarray, inc: np.ndarray,
                           vgrid: VelocityGrid, chi_bound: float):
    """Project the collision increment to exact conservation, keeping f >= 0.

    Corrections live inside the energy-cutoff ball (vacuum corners outside it
    must stay untouched) and are weighted by f(1+f) of the pre-projection
    candidate. The weighting keeps corrections out of near-vacuum cells and
    makes the first-order entropy perturbation vanish near equilibrium, where
    log((1+f)/f) is spanned by the conserved moments. Cells that a correction
    would push negative are clamped to zero and dropped from the support,
    active-set style.
    """
    V = vgrid.centers_flat
    phi = np.column_stack([np.ones(V.shape[0]), V[:, 0], V[:, 1], V[:, 2],
                           np.sum(V * V, axis=1)])
    if np.isfinite(chi_bound):
        support = (vgrid.speed_sq <= chi_bound).ravel()
        if support.sum() < 32:
            support = np.ones(V.shape[0], dtype=bool)
    else:
        support = np.ones(V.shape[0], dtype=bool)
    out = np.empty_like(inc)
    lead = inc.shape[:-3]
    inc_flat = inc.reshape(lead + (-1,))
    base_flat = base.reshape(lead + (-1,))
    corr_norm = 0.0
    for xc in np.ndindex(lead):
        r = inc_flat[xc].copy()
        b = base_flat[xc]
        cand = np.maximum(b + r, 0.0)
        weights = cand * (1.0 + cand) * support
        act = support.copy()
        for _ in range(30):
            rp = _project_slice(r, phi, weights * act)
            fnew = b + rp
            neg = fnew < 0.0
            if not np.any(neg):
                r = rp
                break
            rp[neg] = -b[neg]
            act &= ~neg
            r = rp
        else:
            r = _project_slice(r, phi, weights * act)
        corr_norm = max(corr_norm, float(np.max(np.abs(r - inc_flat[xc]))))
        out[xc + (...,)] = r.reshape((vgrid.n_v,) * 3)
    return out, corr_norm


def conservation_defect(inc: CollisionIncrement) -> dict:
    """Raw mass/momentum/energy sums of an increment (pre-projection defect)."""
    vgrid = inc.vgrid
    vx, vy, vz = vgrid.mesh
    vals = inc.values
    cell = vgrid.dv ** 3
    lead_axes = tuple(range(vals.ndim - 3))

    def tot(w):
        return float(np.max(np.abs(np.sum(vals * w, axis=(-3, -2, -1))))) * cell

    return {"mass": tot(1.0), "px": tot(vx), "py": tot(vy), "pz": tot(vz),
            "energy": tot(vgrid.speed_sq)}


def picard_advance(state: RunState, cfg: SolverConfig) -> RunState:
    """Advance one step by Picard iteration of the mild map.

    Non-convergence rejects the step and halves dt, up to cfg.max_halvings;
    exhaustion raises NumericalFailure.
    """
    f_t = state.field
    dt = cfg.dt
    for halving in range(cfg.max_halvings + 1):
        u = f_t
        converged = False
        iters = 0
        for m in range(cfg.fp_max_iter):
            u_new = fixed_point_map_C(u, f_t, dt, cfg)
            res = float(np.max(np.abs(u_new.values - u.values)))
            u = u_new
            iters = m + 1
            if res < cfg.fp_tol:
                converged = True
                break
        if converged:
            break
        dt *= 0.5
    else:
        raise NumericalFailure(
            f"fixed-point iteration did not reach {cfg.fp_tol} within "
            f"{cfg.fp_max_iter} sweeps after {cfg.max_halvings} dt halvings "
            f"(t = {state.time}, last dt = {dt})")

    proj_norm = 0.0
    if cfg.projection:
        base = transport_shift(f_t, dt)
        np.maximum(base.values, 0.0, out=base.values)
        inc = u.values - base.values
        fixed, proj_norm = _conservative_step_fix(base.values, inc, f_t.vgrid,
                                                  cfg.resolved_chi())
        vals = base.values + fixed
        np.maximum(vals, 0.0, out=vals)  # rounding-level residue only
        u = DistributionField(vals, f_t.vgrid, f_t.tgrid)

    state.field = u
    state.time += dt
    state.step_count += 1
    state.last_fp_iters = iters
    state.last_projection_norm = proj_norm
    # running sup-envelope of f# per velocity cell (sup over x equals sup
    # over x of the untransported field on the periodic grid)
    sup_x = u.values.max(axis=(0, 1, 2))
    state.envelope = np.maximum(state.envelope, sup_x)
    w = u.vgrid.dv ** 3
    m1 = float(np.sum(state.envelope)) * w
    m2 = float(np.sum(state.envelope * (1.0 + u.vgrid.speed_sq))) * w
    state.m1_series.append((state.time, m1))
    state.m2_series.append((state.time, m2))
    return state


def _record(state: RunState, cfg: SolverConfig):
    m = compute_moments(state.field, time=state.time, ordered=cfg.ordered)
    state.history.append({
        "time": state.time, "mass": m.mass, "px": m.momentum[0],
        "py": m.momentum[1], "pz": m.momentum[2], "energy": m.energy,
        "entropy": m.entropy, "linf": m.linf,
        "window_n": state.window_index, "fp_iters": state.last_fp_iters,
        "projection_norm": state.last_projection_norm,
    })


def start_state(cfg: SolverConfig, f0: DistributionField) -> RunState:
    f0.validate()
    linf0 = f0.linf()
    if linf0 > 2.0 ** cfg.L:
        raise ValueError(f"||f0||_inf = {linf0} exceeds 2^L = {2.0 ** cfg.L}")
    if cfg.alpha > 0 and f0.vgrid.v_max < 1.0 / cfg.alpha:
        raise ValueError("v_max must be >= 1/alpha so the energy-cutoff ball "
                         "fits inside the grid")
    c0 = initial_sup_moment(f0)
    if not np.isfinite(c0):
        raise ValueError("initial sup-density moment is not finite")
    state = RunState(time=0.0, field=f0.copy(), window_index=1,
                     threshold=2.0 ** (cfg.L + 2), c0=c0,
                     envelope=f0.values.max(axis=(0, 1, 2)).copy())
    w = f0.vgrid.dv ** 3
    state.m1_series.append((0.0, float(np.sum(state.envelope)) * w))
    state.m2_series.append((0.0, float(np.sum(state.envelope *
                                              (1.0 + f0.vgrid.speed_sq))) * w))
    state.threshold_history.append((0.0, state.window_index, state.threshold))
    return state


def run(cfg: SolverConfig, f0: DistributionField) -> RunState:
    """Advance to t_end with window continuation and blow-up monitoring.

    Crossing the current threshold 2^(L+2n) increments the window index;
    exceeding the hard ceiling stops the run with a blow-up report (status
    'blowup', not an exception). Picard failure yields status 'numfail'.
    """
    state = start_state(cfg, f0)
    _record(state, cfg)
    eps = 1e-12 * max(cfg.t_end, cfg.dt)
    while state.time < cfg.t_end - eps:
        try:
            picard_advance(state, cfg)
        except NumericalFailure as exc:
            state.status = "numfail"
            state.message = str(exc)
            _record(state, cfg)
            return state
        linf = state.field.linf()
        escalated = False
        while linf > state.threshold:
            state.window_index += 1
            state.threshold = 2.0 ** (cfg.L + 2 * state.window_index)
            escalated = True
        if escalated:
            state.threshold_history.append((state.time, state.window_index,
                                            state.threshold))
        if (state.step_count % cfg.output_every == 0
                or state.time >= cfg.t_end - eps or linf > cfg.ceiling):
            _record(state, cfg)
        if linf > cfg.ceiling:
            state.status = "blowup"
            state.message = (f"L-inf norm {linf} exceeded the hard ceiling "
                             f"{cfg.ceiling} at t = {state.time}")
            return state
    return state


def verify_density_bounds(state: RunState, tc: TheoryConstants,
                          alpha: float | None = None) -> dict:
    """Check the proven envelope bounds M1 <= 2 c0 and M2 <= 2 c0.

    M1 inside t <= alpha^2/(4 c0 c), M2 inside the weighted-density window;
    reports pass flags and worst margins (positive margin = bound satisfied).
    """
    win = guaranteed_window(tc, alpha)
    bound = 2.0 * tc.c0
    report = {"bound": bound, "t_M1": win["t_M1"], "t_M2": win["t_M2"]}
    for name, series, t_win in (("M1", state.m1_series, win["t_M1"]),
                                ("M2", state.m2_series, win["t_M2"])):
        inside = [(t, m) for t, m in series if t <= t_win]
        if inside:
            worst = max(m for _, m in inside)
            report[name] = {"checked": len(inside), "worst": worst,
                            "margin": bound - worst, "passed": worst <= bound}
        else:
            report[name] = {"checked": 0, "worst": None, "margin": None,
                            "passed": True}
    report["passed"] = report["M1"]["passed"] and report["M2"]["passed"]
    return report


def _run_recording_fields(cfg: SolverConfig, f0: DistributionField):
    """Run and keep a field snapshot per step (study helper; no dt halving)."""
    state = start_state(cfg, f0)
    snaps = [(0.0, f0.copy())]
    eps = 1e-12 * max(cfg.t_end, cfg.dt)
    while state.time < cfg.t_end - eps:
        picard_advance(state, cfg)
        snaps.append((state.time, state.field.copy()))
        if state.field.linf() > cfg.ceiling:
            state.status = "blowup"
            break
    return state, snaps


def alpha_cauchy_study(f0: DistributionField, alphas, cfg: SolverConfig) -> dict:
    """L1 distances of regularized runs for a descending list of alphas.

    Returns consecutive-pair max-in-time distances, the Cauchy forcing terms
    |a_i - a_j| + min(a_i, a_j)^2 and the fitted constant C. Any aborting run
    yields a partial table with status 'aborted'.
    """
    from dataclasses import replace
    alphas = list(alphas)
    if any(alphas[i] <= alphas[i + 1] for i in range(len(alphas) - 1)):
        raise ValueError("alphas must be strictly decreasing")
    runs = {}
    status = "ok"
    for a in alphas:
        cfg_a = replace(cfg, alpha=a, max_halvings=0)
        try:
            st, snaps = _run_recording_fields(cfg_a, f0)
        except NumericalFailure as exc:
            status = f"aborted: alpha={a}: {exc}"
            break
        if st.status != "ok":
            status = f"aborted: alpha={a}: {st.status}"
            break
        runs[a] = snaps
    pairs = []
    for a1, a2 in zip(alphas, alphas[1:]):
        if a1 not in runs or a2 not in runs:
            break
        s1, s2 = runs[a1], runs[a2]
        dist = max(l1_distance(f1, f2)
                   for (_, f1), (_, f2) in zip(s1, s2))
        forcing = abs(a1 - a2) + min(a1, a2) ** 2
        pairs.append({"alpha_hi": a1, "alpha_lo": a2, "distance": dist,
                      "forcing": forcing})
    c_fit = max((p["distance"] / p["forcing"] for p in pairs), default=0.0)
    return {"alphas": alphas, "pairs": pairs, "C": c_fit, "status": status}


def stability_study(f0_a: DistributionField, f0_b: DistributionField,
                    cfg: SolverConfig, tc: TheoryConstants | None = None) -> dict:
    """Evolve a perturbed pair and compare L1 growth to the exponential envelope."""
    d0 = l1_distance(f0_a, f0_b)
    st_a, snaps_a = _run_recording_fields(cfg, f0_a)
    st_b, snaps_b = _run_recording_fields(cfg, f0_b)
    times = [t for t, _ in snaps_a]
    dists = [l1_distance(fa, fb)
             for (_, fa), (_, fb) in zip(snaps_a, snaps_b)]
    if d0 == 0.0:
        return {"identical": True, "times": times, "distances": dists,
                "max_distance": max(dists)}
    ratios = [d / d0 for d in dists]
    # least-squares exponential rate of log r vs t
    ts = np.array(times[1:])
    lr = np.log(np.maximum(ratios[1:], 1e-300))
    rate = float(ts @ lr / (ts @ ts)) if ts.size else 0.0
    report = {"identical": False, "times": times, "ratios": ratios,
              "fitted_rate": rate}
    if tc is not None:
        env_rate = tc.c3 * tc.c2 * 2.0 ** (2 * tc.L)
        report["envelope_rate"] = env_rate
        report["within_envelope"] = all(
            r <= math.exp(env_rate * t) * (1.0 + 1e-9)
            for t, r in zip(times, ratios))
    return report
