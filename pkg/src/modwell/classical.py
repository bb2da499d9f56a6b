"""Exact classical dynamics on the (zeta, p, n) phase space.

Integrator: Strang splitting H = T + W with both sub-flows exact.
T = p^2 drifts zeta at 2p; W = U_J + n.b rotates n about the frozen local
field (Rodrigues) and kicks p with the analytic time integral of the
rotating moment.  The step is the palindrome drift/2 . W . drift/2, so it
is symplectic, second order, preserves |n| exactly, and running it with
-dtau retraces a trajectory to roundoff.  A Yoshida triple jump provides
the 4th-order composition used by default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ellipe, ellipk

from .errors import DomainError, IntegrationError
from .model import (ENERGY_UNIT_PER_SECOND, LatticeParams, band_potential,
                    classical_potential, fictitious_field, field_magnitude,
                    force as potential_force, pendulum_coefficients,
                    scalar_potential)

_YOSH_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_YOSH_W0 = 1.0 - 2.0 * _YOSH_W1


@dataclass(frozen=True)
class ClassicalState:
    """A point (zeta, p, n) of the 4D phase space; n is a unit 3-vector."""

    zeta: float
    p: float
    n: tuple

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        if n.shape != (3,):
            raise DomainError("n must be a 3-vector")
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise DomainError("n must be a unit vector")
        object.__setattr__(self, "n", tuple(float(x) for x in n))

    @classmethod
    def from_angles(cls, zeta: float, p: float, theta: float, phi: float):
        st = math.sin(theta)
        return cls(zeta, p, (st * math.cos(phi), st * math.sin(phi), math.cos(theta)))

    @property
    def n_array(self) -> np.ndarray:
        return np.array(self.n)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray = field(repr=False)
    zeta: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    n: np.ndarray = field(repr=False)
    energies: np.ndarray = field(repr=False)

    @property
    def max_energy_drift(self) -> float:
        e0 = self.energies[0]
        return float(np.max(np.abs(self.energies - e0)) / max(abs(e0), 1e-30))

    def state(self, i: int) -> ClassicalState:
        return ClassicalState(float(self.zeta[i]), float(self.p[i]), tuple(self.n[i]))


@dataclass(frozen=True)
class SectionPoint:
    """Turning point on the p = 0, dp/dtau > 0 surface of section."""

    phi: float
    n_z: float
    zeta: float
    tau: float
    p: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class FrequencyPair:
    omega1: float
    omega2: float

    @property
    def ratio(self) -> float:
        return self.omega2 / self.omega1


@dataclass(frozen=True)
class PendulumActionAngle:
    freqs: FrequencyPair
    action: float
    kappa: float


def energy(params: LatticeParams, zeta, p, n):
    """H = p^2 + U_J + n . b, in E_R."""
    return np.asarray(p) ** 2 + classical_potential(params, zeta, n)


# ----------------------------------------------------------- the integrator

def _w_flow(params: LatticeParams, zeta, p, n, h):
    """Exact flow of W(zeta, n) for time h at frozen zeta."""
    u0, bx, f = params.u0, params.bx, float(params.f_spin)
    c, s = math.cos(params.theta_l), math.sin(params.theta_l)
    s2z = np.sin(2.0 * zeta)
    c2z = np.cos(2.0 * zeta)
    uj_p = (-4.0 * u0 * c) * s2z
    bf = (-u0 * s) * s2z
    bf_p = (-2.0 * u0 * s) * c2z

    bmag = np.hypot(bx, bf)
    rate = bmag / f
    inv_b = 1.0 / np.where(bmag == 0.0, 1.0, bmag)
    ux = bx * inv_b
    uz = bf * inv_b
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    ndotu = nx * ux + nz * uz
    perp_x = nx - ndotu * ux
    perp_z = nz - ndotu * uz
    wx = -uz * ny
    wy = uz * nx - ux * nz
    wz = ux * ny

    ang = rate * h
    ca = np.cos(ang)
    sa = np.sin(ang)
    out = np.empty_like(n)
    out[..., 0] = ndotu * ux + perp_x * ca + wx * sa
    out[..., 1] = ny * ca + wy * sa
    out[..., 2] = ndotu * uz + perp_z * ca + wz * sa
    norm2 = out[..., 0] ** 2 + out[..., 1] ** 2 + out[..., 2] ** 2
    out /= np.sqrt(norm2)[..., None]

    # exact kick: dp = -h U_J' - b_fict' * int_0^h n_z(t) dt
    small = np.abs(ang) < 1e-6
    inv_r = 1.0 / np.where(rate == 0.0, 1.0, rate)
    i_sin = np.where(small, h * (1.0 - ang * ang / 6.0), sa * inv_r)
    i_cos = np.where(small, (0.5 * h) * ang * (1.0 - ang * ang / 12.0),
                     (1.0 - ca) * inv_r)
    p_out = p - h * uj_p - bf_p * (ndotu * uz * h + perp_z * i_sin + wz * i_cos)
    return p_out, out


def _step2(params, zeta, p, n, h):
    zeta = zeta + p * h
    p, n = _w_flow(params, zeta, p, n, h)
    zeta = zeta + p * h
    return zeta, p, n


def _step4(params, zeta, p, n, h):
    zeta, p, n = _step2(params, zeta, p, n, _YOSH_W1 * h)
    zeta, p, n = _step2(params, zeta, p, n, _YOSH_W0 * h)
    zeta, p, n = _step2(params, zeta, p, n, _YOSH_W1 * h)
    return zeta, p, n


def flow(params: LatticeParams, zeta, p, n, tau: float, dtau: float, order: int = 4):
    """Propagate array states by tau (tau < 0 integrates backward)."""
    if dtau <= 0:
        raise DomainError("dtau must be positive")
    stepper = {2: _step2, 4: _step4}[order]
    nst = int(round(abs(tau) / dtau))
    h = math.copysign(dtau, tau)
    zeta = np.asarray(zeta, dtype=float).copy()
    p = np.asarray(p, dtype=float).copy()
    n = np.asarray(n, dtype=float).copy()
    for _ in range(nst):
        zeta, p, n = stepper(params, zeta, p, n, h)
    return zeta, p, n


def integrate(params: LatticeParams, state: ClassicalState, tau_span: float,
              dtau: float = 1e-3, order: int = 4, sample_every: int = 1,
              energy_tol: float = 1e-8) -> Trajectory:
    """Integrate one state, storing every sample_every-th step.

    Negative tau_span integrates backward.  Raises IntegrationError when
    the relative energy drift exceeds energy_tol.
    """
    stepper = {2: _step2, 4: _step4}[order]
    nst = int(round(abs(tau_span) / dtau))
    h = math.copysign(dtau, tau_span)
    zeta, p = np.float64(state.zeta), np.float64(state.p)
    n = state.n_array
    times = [0.0]
    zs, ps, ns = [float(zeta)], [float(p)], [n.copy()]
    for k in range(nst):
        zeta, p, n = stepper(params, zeta, p, n, h)
        if (k + 1) % sample_every == 0 or k == nst - 1:
            times.append((k + 1) * h)
            zs.append(float(zeta))
            ps.append(float(p))
            ns.append(np.asarray(n).copy())
    traj = Trajectory(times=np.array(times), zeta=np.array(zs), p=np.array(ps),
                      n=np.array(ns),
                      energies=energy(params, np.array(zs), np.array(ps), np.array(ns)))
    if traj.max_energy_drift > energy_tol:
        raise IntegrationError(
            f"relative energy drift {traj.max_energy_drift:.2e} exceeds {energy_tol:.1e}; "
            "reduce dtau")
    return traj


# ------------------------------------------------------- surface of section

def _shell_point(params, energy_target, phi, n_z, rng):
    """Solve U_J + n.b = E for zeta at p = 0; None when unsolvable."""
    st = math.sqrt(max(0.0, 1.0 - n_z * n_z))
    n = np.array([st * math.cos(phi), st * math.sin(phi), n_z])
    length = params.domain_length
    zg = np.linspace(-length / 2, length / 2, 1601)
    h = classical_potential(params, zg, n) - energy_target
    sign_change = np.where(np.sign(h[:-1]) * np.sign(h[1:]) < 0)[0]
    if len(sign_change) == 0:
        return None
    i = sign_change[rng.integers(len(sign_change))]
    zr = brentq(lambda z: float(classical_potential(params, z, n)) - energy_target,
                zg[i], zg[i + 1], xtol=1e-13)
    return zr, n


def poincare_section(params: LatticeParams, energy_target: float, seeds: int,
                     tau_max: float, rng_seed: int, dtau: float = 1.5e-4,
                     max_points_per_seed: int = 400,
                     initial_conditions=None) -> list[SectionPoint]:
    """Section points (p = 0, dp/dtau > 0) for trajectories on one energy shell.

    Initial conditions are sampled uniformly in (phi, n_z) on the p = 0
    shell, solving for zeta and rejecting unsolvable draws; pass
    initial_conditions = [(zeta, n), ...] to seed explicitly.
    """
    zg = np.linspace(-params.domain_length / 2, params.domain_length / 2, 2001)
    vmin = float(np.min(band_potential(params, zg, 1)))
    if energy_target < vmin:
        raise DomainError(
            f"energy {energy_target} is below the global potential minimum {vmin:.3f}")

    if initial_conditions is None:
        rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), 0]))
        initial_conditions = []
        attempts = 0
        while len(initial_conditions) < seeds and attempts < 1000 * seeds:
            attempts += 1
            phi = rng.uniform(0.0, 2.0 * math.pi)
            n_z = rng.uniform(-1.0, 1.0)
            got = _shell_point(params, energy_target, phi, n_z, rng)
            if got is not None:
                initial_conditions.append(got)
        if len(initial_conditions) < seeds:
            raise DomainError("energy shell sampling failed; shell may be tiny")

    zeta = np.array([ic[0] for ic in initial_conditions])
    p = np.zeros(len(initial_conditions))
    n = np.array([ic[1] for ic in initial_conditions])

    points: list[SectionPoint] = []
    counts = np.zeros(len(zeta), dtype=int)

    def emit(j, zj, nj, tj, pj):
        phi_j = math.atan2(nj[1], nj[0]) % (2.0 * math.pi)
        points.append(SectionPoint(phi=phi_j, n_z=float(nj[2]), zeta=float(zj),
                                   tau=float(tj), p=float(pj), seed=int(j)))
        counts[j] += 1

    # a seed that starts on the section counts when dp/dtau > 0 there
    f0 = potential_force(params, zeta, n)
    for j in np.where(f0 > 0)[0]:
        emit(j, zeta[j], n[j], 0.0, 0.0)

    nst = int(round(tau_max / dtau))
    t = 0.0
    for _ in range(nst):
        z2, p2, n2 = _step4(params, zeta, p, n, dtau)
        hits = np.where((p <= 0.0) & (p2 > 0.0) & (counts < max_points_per_seed))[0]
        for j in hits:
            za, pa, na = zeta[j], p[j], n[j].copy()
            lo, hi = 0.0, dtau
            zm, pm, nm = za, pa, na
            for _ in range(54):
                mid = 0.5 * (lo + hi)
                zm, pm, nm = _step4(params, np.float64(za), np.float64(pa), na, mid)
                if pm > 0:
                    hi = mid
                else:
                    lo = mid
                if abs(pm) < 1e-12:
                    break
            emit(j, zm, nm, t + 0.5 * (lo + hi), pm)
        zeta, p, n = z2, p2, n2
        t += dtau
        if np.all(counts >= max_points_per_seed):
            break
    return points


def section_arrays(points: list[SectionPoint]):
    """(phi, n_z, zeta, tau, seed) columns from a point list."""
    if not points:
        return tuple(np.empty(0) for _ in range(5))
    a = np.array([(p.phi, p.n_z, p.zeta, p.tau, p.seed) for p in points])
    return a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4].astype(int)


# ------------------------------------------------------------ Lyapunov

@dataclass(frozen=True)
class LyapunovResult:
    lam: float                      # dimensionless, per unit tau
    lam_per_second: float
    times: np.ndarray = field(repr=False)
    running: np.ndarray = field(repr=False)
    converged: bool = True


def lyapunov_batch(params: LatticeParams, states: list, tau_total: float,
                   renorm_interval: float = 0.1, d0: float = 1e-8,
                   dtau: float = 2.5e-4) -> list:
    """Benettin exponents for several states at once (vectorized pairs)."""
    if tau_total < 20 * renorm_interval:
        raise DomainError("tau_total must be much larger than renorm_interval")
    k = len(states)
    za = np.array([s.zeta for s in states])
    pa = np.array([s.p for s in states])
    na = np.array([s.n for s in states])
    zb, pb, nb = za + d0, pa.copy(), na.copy()
    per = max(1, int(round(renorm_interval / dtau)))
    nst = int(round(tau_total / dtau))
    log_sum = np.zeros(k)
    sums, times = [], []
    for step in range(nst):
        za, pa, na = _step4(params, za, pa, na, dtau)
        zb, pb, nb = _step4(params, zb, pb, nb, dtau)
        if (step + 1) % per == 0:
            d = np.sqrt((za - zb) ** 2 + (pa - pb) ** 2
                        + np.sum((na - nb) ** 2, axis=-1))
            log_sum += np.log(d / d0)
            times.append((step + 1) * dtau)
            sums.append(log_sum.copy())
            scale = d0 / d
            zb = za + (zb - za) * scale
            pb = pa + (pb - pa) * scale
            nb = na + (nb - na) * scale[:, None]
            nb /= np.linalg.norm(nb, axis=-1, keepdims=True)
    times = np.array(times)
    sums = np.array(sums)                        # (n_renorm, k)
    times, running = _running_estimates(times, sums)
    out = []
    for j in range(k):
        lam, conv = _last_half_estimate(running[:, j])
        out.append(LyapunovResult(lam=lam,
                                  lam_per_second=lam * ENERGY_UNIT_PER_SECOND,
                                  times=times, running=running[:, j].copy(),
                                  converged=conv))
    return out


def _running_estimates(times, sums, burn_frac: float = 0.1):
    """Cumulative exponent estimates with the alignment transient removed.

    The first burn_frac of renormalization blocks only orient the
    difference vector along the unstable direction; they are excluded
    from the estimator (standard Benettin practice)."""
    nb = max(1, int(burn_frac * len(times)))
    t0 = times[nb - 1]
    s0 = sums[nb - 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        running = (sums[nb:] - s0) / (times[nb:] - t0)[..., None] \
            if sums.ndim == 2 else (sums[nb:] - s0) / (times[nb:] - t0)
    return times[nb:], running


def _last_half_estimate(curve):
    """Mean of the last-half running estimates plus the 5% spread flag."""
    half = curve[len(curve) // 2:]
    lam = float(np.mean(half))
    conv = bool(np.ptp(half) <= 0.05 * max(abs(lam), 1e-12))
    return lam, conv


def lyapunov(params: LatticeParams, state: ClassicalState, tau_total: float,
             renorm_interval: float = 0.1, d0: float = 1e-8,
             dtau: float = 2.5e-4) -> LyapunovResult:
    """Largest Lyapunov exponent by the Benettin two-trajectory method.

    Converged when the running estimate varies by less than 5% over the
    second half of the run; otherwise the result is flagged.
    """
    if tau_total < 20 * renorm_interval:
        raise DomainError("tau_total must be much larger than renorm_interval")
    za = np.float64(state.zeta)
    pa = np.float64(state.p)
    na = state.n_array
    zb, pb, nb = za + d0, pa.copy(), na.copy()
    per = max(1, int(round(renorm_interval / dtau)))
    nst = int(round(tau_total / dtau))
    log_sum = 0.0
    times, sums = [], []
    for k in range(nst):
        za, pa, na = _step4(params, za, pa, na, dtau)
        zb, pb, nb = _step4(params, zb, pb, nb, dtau)
        if (k + 1) % per == 0:
            d = math.sqrt((za - zb) ** 2 + (pa - pb) ** 2 + float(np.sum((na - nb) ** 2)))
            log_sum += math.log(d / d0)
            times.append((k + 1) * dtau)
            sums.append(log_sum)
            scale = d0 / d
            zb = za + (zb - za) * scale
            pb = pa + (pb - pa) * scale
            nb = na + (nb - na) * scale
            nb /= np.linalg.norm(nb)
    times, running = _running_estimates(np.array(times), np.array(sums))
    lam, converged = _last_half_estimate(running)
    return LyapunovResult(lam=lam, lam_per_second=lam * ENERGY_UNIT_PER_SECOND,
                          times=times, running=running, converged=converged)


# ---------------------------------------------- pendulum action-angle (bx=0)

def _pendulum_action(kappa2: float, c_abs: float) -> float:
    """J = (2 sqrt(2C)/pi) [E(k) - (1-k^2) K(k)] for libration."""
    return (2.0 * math.sqrt(2.0 * c_abs) / math.pi) * \
        (ellipe(kappa2) - (1.0 - kappa2) * ellipk(kappa2))


def pendulum_action_angle(params: LatticeParams, n_z: float, energy_value: float,
                          dnz: float = 1e-5) -> PendulumActionAngle:
    """Action-angle data of the integrable bx = 0 pendulum reduction.

    omega1 comes from the elliptic-integral formula
    omega1 = (pi/2) omega0 / K(kappa) with omega0 = sqrt(8|C|) and
    2 kappa^2 = 1 + E/|C|;  omega2 = dH/d(F n_z) at fixed J, by a centered
    difference in the spin action.
    """
    if params.bx != 0.0:
        raise DomainError("pendulum reduction requires bx = 0")
    if not -1.0 < n_z < 1.0:
        raise DomainError("n_z must lie inside (-1, 1)")
    c_signed, _ = pendulum_coefficients(params, n_z)
    c_abs = abs(float(c_signed))
    kappa2 = 0.5 * (1.0 + energy_value / c_abs)
    if not 0.0 < kappa2 < 1.0:
        raise DomainError(
            f"energy {energy_value} outside the libration range (kappa^2 = {kappa2:.3f})")
    omega0 = math.sqrt(8.0 * c_abs)
    omega1 = 0.5 * math.pi * omega0 / float(ellipk(kappa2))
    action = _pendulum_action(kappa2, c_abs)

    def h_at(nz_val: float) -> float:
        c2, _ = pendulum_coefficients(params, nz_val)
        ca = abs(float(c2))

        def jdiff(k2):
            return _pendulum_action(k2, ca) - action

        lo, hi = 1e-14, 1.0 - 1e-14
        if jdiff(hi) < 0:
            raise DomainError("fixed action leaves the libration range under dnz")
        k2 = brentq(jdiff, lo, hi, xtol=1e-15)
        return ca * (2.0 * k2 - 1.0)

    omega2 = (h_at(n_z + dnz) - h_at(n_z - dnz)) / (2.0 * dnz * params.f_spin)
    return PendulumActionAngle(freqs=FrequencyPair(omega1=omega1, omega2=omega2),
                               action=action, kappa=math.sqrt(kappa2))


# ------------------------------------------- adiabatic frequencies (Eq. (5))

def alpha_surface(params: LatticeParams, zeta, alpha: float):
    """Integrable surface U_J - |b| cos(alpha); alpha = 0 is the lowest band."""
    return scalar_potential(params, zeta) - field_magnitude(params, zeta) * math.cos(alpha)


def _orbit_turning_points(params, alpha, energy_value):
    length = params.domain_length
    zg = np.linspace(-length / 2, length / 2, 4001)
    v = alpha_surface(params, zg, alpha)
    below = v < energy_value
    if not np.any(below):
        raise DomainError("no bounded orbit: energy below the alpha-surface minimum")
    if below[0] or below[-1]:
        raise DomainError("no bounded orbit: energy reaches the domain boundary walls")
    idx = np.where(below)[0]
    segments = np.split(idx, np.where(np.diff(idx) != 1)[0] + 1)
    # prefer the segment containing the global minimum (the well region)
    zmin = zg[int(np.argmin(v))]
    seg = segments[0]
    for s in segments:
        if zg[s[0]] <= zmin <= zg[s[-1]]:
            seg = s
            break

    def f(z):
        return float(alpha_surface(params, z, alpha)) - energy_value

    za = brentq(f, zg[seg[0] - 1], zg[seg[0]], xtol=1e-14)
    zb = brentq(f, zg[seg[-1]], zg[seg[-1] + 1], xtol=1e-14)
    return za, zb


def adiabatic_frequencies(params: LatticeParams, alpha: float, energy_value: float,
                          n_quad: int = 600) -> FrequencyPair:
    """(omega1, omega2) of the integrable alpha-surface orbit at energy E.

    omega1 = 2 pi / T from the turning-point quadrature of the 1-D motion;
    omega2 = <|b(zeta)|>/F averaged over the same orbit (precession about
    the local field in the frame moving with the atom).
    """
    za, zb = _orbit_turning_points(params, alpha, energy_value)
    c = 0.5 * (za + zb)
    r = 0.5 * (zb - za)
    x, w = np.polynomial.legendre.leggauss(n_quad)
    u = 0.5 * math.pi * x
    zq = c + r * np.sin(u)
    de = energy_value - alpha_surface(params, zq, alpha)
    de = np.maximum(de, 1e-300)
    jac = 0.5 * math.pi * r * np.cos(u)
    # dtau = dzeta/(2 p), p = sqrt(E - V)
    t_half = np.sum(w * jac / (2.0 * np.sqrt(de)))
    b_int = np.sum(w * jac * field_magnitude(params, zq) / (2.0 * np.sqrt(de)))
    period = 2.0 * t_half
    omega1 = 2.0 * math.pi / period
    omega2 = (2.0 * b_int / period) / params.f_spin
    return FrequencyPair(omega1=omega1, omega2=omega2)


def island_center_candidates(params: LatticeParams, alpha: float,
                             energy_value: float):
    """Predicted (n_z, phi) section locations of the alpha-surface orbit.

    At the left turning point (p = 0, force > 0) the moment lies in the
    plane spanned by the local field and its normal; the two candidates
    are the resonant orientations on either side of -b_hat.
    """
    za, _ = _orbit_turning_points(params, alpha, energy_value)
    bf = float(fictitious_field(params, za))
    bm = math.hypot(params.bx, bf)
    bhx, bhz = params.bx / bm, bf / bm
    ca, sa = math.cos(alpha), math.sin(alpha)
    out = []
    for sign in (+1.0, -1.0):
        nx = -bhx * ca + sign * bhz * sa
        nz = -bhz * ca - sign * bhx * sa
        phi = 0.0 if nx >= 0 else math.pi
        out.append((float(nz), phi, float(za)))
    return out


# ----------------------------------------------------------- resonance scan

@dataclass(frozen=True)
class ResonanceHit:
    variable: str          # "n_z", "alpha", or "energy"
    value: float
    ratio: float


def resonance_scan(params: LatticeParams, ratios, energy_value: float | None = None,
                   nz_range=None, alpha_range=None, energy_range=None,
                   alpha: float | None = None, num: int = 81) -> list[ResonanceHit]:
    """Locate loci where the unperturbed frequency ratio omega2/omega1 hits
    a rational target, by bisection along one scan axis.

    Modes: nz_range (pendulum, bx = 0, fixed energy); alpha_range (fixed
    energy); energy_range (fixed alpha).  Empty ratio lists give [].
    """
    ratios = list(ratios)
    if not ratios:
        return []
    modes = sum(x is not None for x in (nz_range, alpha_range, energy_range))
    if modes != 1:
        raise DomainError("exactly one of nz_range, alpha_range, energy_range required")

    if nz_range is not None:
        if energy_value is None:
            raise DomainError("nz_range mode requires energy_value")
        grid = np.linspace(nz_range[0], nz_range[1], num)

        def val(x):
            return pendulum_action_angle(params, x, energy_value).freqs.ratio
        var = "n_z"
    elif alpha_range is not None:
        if energy_value is None:
            raise DomainError("alpha_range mode requires energy_value")
        grid = np.linspace(alpha_range[0], alpha_range[1], num)

        def val(x):
            return adiabatic_frequencies(params, x, energy_value).ratio
        var = "alpha"
    else:
        if alpha is None:
            raise DomainError("energy_range mode requires alpha")
        grid = np.linspace(energy_range[0], energy_range[1], num)

        def val(x):
            return adiabatic_frequencies(params, alpha, x).ratio
        var = "energy"

    def sample(xs):
        out = np.full(len(xs), np.nan)
        for i, x in enumerate(xs):
            try:
                out[i] = val(x)
            except DomainError:
                pass
        return out

    samples = sample(grid)

    def bisect_hits(xs, vals, r, acc):
        for i in range(len(xs) - 1):
            a, b = vals[i], vals[i + 1]
            if np.isfinite(a) and np.isfinite(b) and (a - r) * (b - r) < 0:
                try:
                    x0 = brentq(lambda x: val(x) - r, xs[i], xs[i + 1], xtol=1e-10)
                    acc.append(ResonanceHit(variable=var, value=float(x0),
                                            ratio=float(r)))
                except (DomainError, ValueError):
                    continue

    hits: list[ResonanceHit] = []
    for r in ratios:
        bisect_hits(grid, samples, r, hits)
        # the ratio diverges at separatrix boundaries between orbit
        # families; refine across jumps and domain edges, where narrow
        # crossings hide between coarse grid points
        for i in range(num - 1):
            a, b = samples[i], samples[i + 1]
            jump = (np.isfinite(a) and np.isfinite(b)
                    and abs(b - a) > max(1.0, 0.25 * abs(r)))
            edge = np.isfinite(a) != np.isfinite(b)
            if jump or edge:
                xs = np.linspace(grid[i], grid[i + 1], 201)
                bisect_hits(xs, sample(xs), r, hits)
    uniq: list[ResonanceHit] = []
    for h in sorted(hits, key=lambda h: (h.ratio, h.value)):
        if not any(abs(h.value - u.value) < 1e-8 and h.ratio == u.ratio
                   for u in uniq):
            uniq.append(h)
    return uniq


# -------------------------------------------------------------- break time

def break_time(lam_per_second: float, action_ratio: float) -> float:
    """Upper bound ln(I/hbar)/lambda on the quantum-classical break time, s."""
    if action_ratio <= 1.0:
        raise DomainError("action_ratio I/hbar must exceed 1")
    if lam_per_second <= 0.0:
        raise DomainError("lambda must be positive")
    return math.log(action_ratio) / lam_per_second
