"""
Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy import linalg, optimize

from . import workers
from .errors import (ConfigError, InfeasibleDispatchError,
    IntegrationBlowupError)


logger = logging.getLogger(__name__)

STABLE = 0
UNSTABLE = 1
LABEL_NAMES = {STABLE: "stable", UNSTABLE: "unstable"}

MAX_FAULT_DURATION = 0.3


@dataclass
class SimulationConfig:
    """Time grid and labelling settings for trajectory generation."""
    dt: float = 0.02
    horizon: float = 10.0
    substeps: int = 4
    t_fault: float = 1.0
    max_fault_duration: float = MAX_FAULT_DURATION
    load_range: tuple = (0.7, 1.3)
    threshold_angle: float = np.pi

    @property
    def n_steps(self):
        return int(round(self.horizon/self.dt))

    def validate(self):
        if not self.dt > 0 or self.substeps < 1:
            raise ConfigError("dt must be positive and substeps >= 1")
        if abs(self.n_steps*self.dt - self.horizon) > 1e-9:
            raise ConfigError("horizon %g is not a multiple of dt %g" % (
                self.horizon, self.dt))


@dataclass
class FaultScenario:
    """A contingency: faulted lines, fault timing and loading."""
    lines: tuple = ()
    t_fault: float = 1.0
    t_clear: float = 1.1
    load_scale: float = 1.0

    def validate(self):
        if not self.lines:
            return
        if not self.t_fault < self.t_clear <= (self.t_fault +
            MAX_FAULT_DURATION + 1e-12):
            raise ConfigError("fault must clear within %g s of onset "
                "(t_fault=%g, t_clear=%g)" % (MAX_FAULT_DURATION,
                self.t_fault, self.t_clear))

    @property
    def duration(self):
        return self.t_clear - self.t_fault


class Trajectory(object):
    """One simulated (or predicted) contingency.

    Channels are ordered (delta_1..delta_ng, omega_1..omega_ng); angles in
    rad, speeds as per-unit deviation from synchronous.

    Constructor args:
        data: The (n_x, T) array of samples.
        dt: Sample spacing [s].
        label: STABLE or UNSTABLE.
        oos: Per-machine out-of-step flags.
        scenario: The FaultScenario that produced it (optional).
        ident: Integer identifier within its dataset.
        inertia: Machine inertia constants used for the COI (optional).
        predicted: True if the samples come from a forecaster.
    """

    def __init__(self, data, dt, label=STABLE, oos=None, scenario=None,
        ident=0, inertia=None, predicted=False):

        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] % 2:
            raise ConfigError("trajectory data must be (2*n_g, T), got %s"
                % (self.data.shape,))
        self.dt = float(dt)
        self.label = int(label)
        n_g = self.data.shape[0] // 2
        self.oos = (np.zeros(n_g, dtype=bool) if oos is None
            else np.asarray(oos, dtype=bool))
        self.scenario = scenario
        self.ident = ident
        self.inertia = None if inertia is None else np.asarray(inertia,
            dtype=float)
        self.predicted = predicted

    @property
    def n_x(self):
        return self.data.shape[0]

    @property
    def n_g(self):
        return self.data.shape[0] // 2

    @property
    def T(self):
        return self.data.shape[1]

    @property
    def angles(self):
        return self.data[:self.n_g]

    @property
    def speeds(self):
        return self.data[self.n_g:]

    @property
    def stable(self):
        return self.label == STABLE

    def __repr__(self):
        return "Trajectory(id=%r, n_x=%d, T=%d, %s)" % (self.ident, self.n_x,
            self.T, LABEL_NAMES.get(self.label, self.label))


def electrical_power(Y, E, delta):
    """Electrical power output of each machine.

    P_e,i = sum_j E_i E_j (G_ij cos(d_i-d_j) + B_ij sin(d_i-d_j))

    Args:
        Y: Complex (n_g, n_g) reduced admittance.
        E: Internal voltage magnitudes.
        delta: Rotor angles [rad].

    Returns:
        The (n_g,) vector of electrical powers [p.u.].
    """
    Y = np.asarray(Y)
    E = np.asarray(E, dtype=float)
    delta = np.asarray(delta, dtype=float)
    diff = delta[:,None] - delta[None,:]
    EE = E[:,None] * E[None,:]
    return (EE * (Y.real*np.cos(diff) + Y.imag*np.sin(diff))).sum(axis=1)


def electrical_power_jacobian(Y, E, delta):
    """Jacobian d P_e / d delta."""
    diff = delta[:,None] - delta[None,:]
    EE = E[:,None] * E[None,:]
    J = EE * (Y.real*np.sin(diff) - Y.imag*np.cos(diff))
    np.fill_diagonal(J, 0.0)
    np.fill_diagonal(J, -J.sum(axis=1))
    return J


def swing_derivatives(spec, Y, state, load_scale=1.0, Pm=None):
    """Right-hand side of the classical swing equations.

    d delta_i / dt = omega_s * domega_i
    d domega_i / dt = (Pm_i*load_scale - P_e,i - D_i*domega_i) / (2 H_i)

    Args:
        spec: The PowerSystemSpec.
        Y: The admittance active at this instant.
        state: Length 2*n_g vector (angles, speed deviations).
        load_scale: Scaling applied to spec.Pm when Pm is None.
        Pm: Mechanical powers already dispatched; overrides
            spec.Pm*load_scale.

    Returns:
        The state derivative.
    """
    n = spec.n_g
    if len(state) != 2*n:
        raise ConfigError("state has %d entries, expected %d" % (len(state),
            2*n))
    delta = state[:n]
    domega = state[n:]
    if Pm is None:
        Pm = spec.Pm * load_scale
    Pe = electrical_power(Y, spec.E, delta)
    return np.concatenate((spec.omega_s*domega,
        (Pm - Pe - spec.D*domega) / (2*spec.H)))


def _scaled_pm(spec, load_scale):
    Pm = spec.Pm * load_scale
    Pm[spec.ref] = spec.Pm[spec.ref]
    return Pm


def solve_equilibrium(spec, load_scale=1.0, tol=1e-10, max_iter=100,
    Y=None):
    """Pre-fault equilibrium angles.

    Newton iteration on Pm_i*load_scale - P_e,i(delta) = 0 for every
    machine except the reference, whose angle is fixed at 0 and whose
    mechanical power is re-dispatched (see dispatch).

    Args:
        spec: The PowerSystemSpec.
        load_scale: Loading factor.
        tol: Convergence threshold on the max-norm mismatch.
        max_iter: Iteration limit.
        Y: Admittance to solve on (default spec.Y_pre).

    Returns:
        The (n_g,) angle vector.

    Raises:
        InfeasibleDispatchError: If the iteration does not converge.
    """
    Y = spec.Y_pre if Y is None else Y
    n = spec.n_g
    free = np.array([i for i in range(n) if i != spec.ref], dtype=int)
    Pm = _scaled_pm(spec, load_scale)
    delta = np.zeros(n)
    if len(free) == 0:
        return delta

    def mismatch(d):
        return (Pm - electrical_power(Y, spec.E, d))[free]

    r = mismatch(delta)
    res = abs(r).max()
    converged_at = None
    for it in range(max_iter):
        if res < tol:
            if converged_at is None:
                converged_at = it
            # a few extra iterations while the residual still shrinks
            if it - converged_at >= 3:
                break
        J = electrical_power_jacobian(Y, spec.E, delta)[np.ix_(free,free)]
        try:
            step = linalg.solve(J, r)
        except (linalg.LinAlgError, ValueError):
            break
        if not np.isfinite(step).all():
            break
        alpha = 1.0
        for i in range(10):
            trial = delta.copy()
            trial[free] += alpha*step
            r_trial = mismatch(trial)
            res_trial = abs(r_trial).max()
            if res_trial < res or res < tol:
                break
            alpha *= 0.5
        if converged_at is not None and not res_trial < res:
            break
        (delta, r, res) = (trial, r_trial, res_trial)
    if not res < tol:
        raise InfeasibleDispatchError("equilibrium not found at load scale "
            "%.4f (residual %.3e)" % (load_scale, res), residual=res)
    return delta


def dispatch(spec, load_scale, delta, Y=None):
    """Mechanical powers at an equilibrium.

    Non-reference machines take Pm*load_scale; the reference machine takes
    up its electrical power at the given angles so that the system is in
    balance.
    """
    Y = spec.Y_pre if Y is None else Y
    Pm = _scaled_pm(spec, load_scale)
    Pm[spec.ref] = electrical_power(Y, spec.E, delta)[spec.ref]
    return Pm


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5*h*k1)
    k3 = f(x + 0.5*h*k2)
    k4 = f(x + h*k3)
    return x + (h/6.0)*(k1 + 2*k2 + 2*k3 + k4)


def run_swing(spec, schedule, x0, Pm, dt, n_steps, substeps=4):
    """Integrate the swing equations with classic RK4.

    Args:
        spec: The PowerSystemSpec.
        schedule: List of (t_switch, Y) sorted by time; the first entry
            must start at 0. The admittance switches exactly at t_switch.
        x0: Initial state (2*n_g,).
        Pm: Mechanical powers.
        dt: Output sample spacing.
        n_steps: Number of output samples (including t=0).
        substeps: RK4 substeps per output interval.

    Returns:
        The (2*n_g, n_steps) array of samples at t_k = k*dt.

    Raises:
        IntegrationBlowupError: If the state becomes non-finite.
    """
    switch_times = np.array([t for (t,Y) in schedule])
    mats = [Y for (t,Y) in schedule]

    def active(t):
        i = np.searchsorted(switch_times, t, side='right') - 1
        return mats[max(i,0)]

    out = np.empty((len(x0), n_steps))
    x = np.array(x0, dtype=float)
    out[:,0] = x
    h = dt / substeps
    for k in range(1, n_steps):
        (t0, t1) = ((k-1)*dt, k*dt)
        points = [t0 + j*h for j in range(substeps)] + [t1]
        for ts in switch_times:
            if t0 < ts < t1:
                points.append(ts)
        points = sorted(points)
        for (a, b) in zip(points[:-1], points[1:]):
            if b - a < 1e-12:
                continue
            Y = active(0.5*(a+b))
            f = lambda s: swing_derivatives(spec, Y, s, Pm=Pm)
            x = _rk4_step(f, x, b-a)
        if not np.isfinite(x).all():
            raise IntegrationBlowupError("non-finite state at t=%.3f s" % t1,
                time=t1)
        out[:,k] = x
    return out


def fault_schedule(spec, scenario):
    """Admittance switching schedule of a scenario."""
    if scenario is None or not scenario.lines:
        return [(0.0, spec.Y_pre)]
    (Y_fault, Y_post) = spec.fault_admittances(scenario.lines)
    return [(0.0, spec.Y_pre), (scenario.t_fault, Y_fault),
        (scenario.t_clear, Y_post)]


def integrate(spec, scenario=None, config=None, delta_offset=None):
    """Simulate one contingency from its pre-fault equilibrium.

    Args:
        spec: The PowerSystemSpec.
        scenario: FaultScenario, or None for an undisturbed run.
        config: SimulationConfig (defaults if None).
        delta_offset: Optional initial angle perturbation added to the
            equilibrium angles.

    Returns:
        A labelled Trajectory.
    """
    config = SimulationConfig() if config is None else config
    config.validate()
    load_scale = 1.0
    if scenario is not None:
        scenario.validate()
        load_scale = scenario.load_scale
    delta0 = solve_equilibrium(spec, load_scale)
    Pm = dispatch(spec, load_scale, delta0)
    x0 = np.concatenate((delta0, np.zeros(spec.n_g)))
    if delta_offset is not None:
        x0[:spec.n_g] += delta_offset
    data = run_swing(spec, fault_schedule(spec, scenario), x0, Pm,
        config.dt, config.n_steps, substeps=config.substeps)
    traj = Trajectory(data, config.dt, scenario=scenario, inertia=spec.H)
    (traj.label, traj.oos) = classify_stability(traj, config.threshold_angle)
    return traj


def center_of_inertia(angles, H=None):
    """Inertia-weighted mean angle at each time step."""
    angles = np.asarray(angles)
    if H is None:
        H = np.ones(angles.shape[0])
    H = np.asarray(H, dtype=float)
    return (H[:,None]*angles).sum(axis=0) / H.sum()


def classify_stability(traj, threshold_angle=np.pi, H=None):
    """Label a trajectory as stable or unstable.

    Machine i is out of step iff max_t |delta_i(t) - delta_COI(t)| exceeds
    threshold_angle (strictly).

    Args:
        traj: The Trajectory.
        threshold_angle: Separation limit [rad].
        H: Inertia weights for the COI (default traj.inertia, or equal
            weights).

    Returns:
        Tuple (label, oos) with oos the per-machine boolean flags.
    """
    if H is None:
        H = traj.inertia
    angles = traj.angles
    coi = center_of_inertia(angles, H)
    sep = abs(angles - coi).max(axis=1)
    oos = sep > threshold_angle
    return (UNSTABLE if oos.any() else STABLE, oos)


def system_energy(spec, Y, states, Pm, delta_ref):
    """Transient energy of a lossless reduced network.

    W = sum_i H_i omega_s domega_i^2 - sum_i Pm_i (delta_i - delta_ref_i)
        - sum_{i<j} E_i E_j B_ij (cos(delta_ij) - cos(delta_ref_ij))

    Conductances are ignored; for G = 0 and D = 0 the quantity is
    conserved by the swing equations.

    Args:
        states: Array (2*n_g, T) or (2*n_g,).

    Returns:
        Energy per time sample.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:,None]
    n = spec.n_g
    delta = states[:n]
    domega = states[n:]
    B = np.asarray(Y).imag
    kinetic = (spec.H[:,None] * spec.omega_s * domega**2).sum(axis=0)
    position = -(Pm[:,None] * (delta - delta_ref[:,None])).sum(axis=0)
    iu = np.triu_indices(n, 1)
    EEB = (spec.E[:,None]*spec.E[None,:]*B)[iu]
    d_ij = delta[iu[0]] - delta[iu[1]]
    dref_ij = delta_ref[iu[0]] - delta_ref[iu[1]]
    network = -(EEB[:,None] * (np.cos(d_ij) - np.cos(dref_ij)[:,None])).sum(
        axis=0)
    return kinetic + position + network


def critical_clearing_time(spec, scenario, config=None, lo=1e-3,
    hi=MAX_FAULT_DURATION, xtol=1e-4):
    """Longest stable fault duration for a contingency.

    The stable/unstable boundary in fault duration is bracketed with
    Brent's method. Only the lines, onset and loading of scenario are
    used; its clearing time is varied.

    Returns:
        The critical clearing time [s]; 0 if even lo is unstable and
        numpy.inf if hi is still stable.
    """
    config = SimulationConfig() if config is None else config

    def sign(duration):
        trial = FaultScenario(lines=tuple(scenario.lines),
            t_fault=scenario.t_fault, t_clear=scenario.t_fault+duration,
            load_scale=scenario.load_scale)
        try:
            traj = integrate(spec, trial, config)
        except IntegrationBlowupError:
            return 1.0
        return 1.0 if traj.label == UNSTABLE else -1.0

    if sign(lo) > 0:
        return 0.0
    if sign(hi) < 0:
        return np.inf
    return optimize.brentq(sign, lo, hi, xtol=xtol)


def sample_scenario(spec, rng, contingency_order=1, config=None):
    """Draw a random contingency."""
    config = SimulationConfig() if config is None else config
    candidates = spec.fault_lines()
    if contingency_order > len(candidates):
        raise ConfigError("contingency order %d exceeds %d fault lines" % (
            contingency_order, len(candidates)))
    load_scale = rng.uniform(*config.load_range)
    lines = rng.choice(candidates, size=contingency_order, replace=False)
    # duration in (0, max]
    duration = config.max_fault_duration - rng.uniform(0.0,
        config.max_fault_duration)
    return FaultScenario(lines=tuple(sorted(int(l) for l in lines)),
        t_fault=config.t_fault, t_clear=config.t_fault+duration,
        load_scale=load_scale)


def simulate_scenario(spec, index, rng_seed, contingency_order=1,
    config=None, max_attempts=10):
    """Simulate the index-th scenario of a dataset.

    The random stream is derived from (rng_seed, index), so the result does
    not depend on the order in which scenarios are processed. rng_seed may
    be an integer or a sequence of integers.

    Returns:
        The Trajectory, or None if no feasible scenario was found in
        max_attempts draws.
    """
    key = [int(s) for s in np.atleast_1d(rng_seed)] + [int(index)]
    rng = np.random.default_rng(key)
    for attempt in range(max_attempts):
        scenario = sample_scenario(spec, rng, contingency_order, config)
        try:
            traj = integrate(spec, scenario, config)
        except (InfeasibleDispatchError, IntegrationBlowupError) as e:
            logger.debug("scenario %d attempt %d rejected: %s", index,
                attempt, e)
            continue
        traj.ident = index
        return traj
    logger.warning("scenario %d skipped after %d infeasible draws", index,
        max_attempts)
    return None


def _simulate_job(args):
    return simulate_scenario(*args)


def generate_dataset(spec, n_scenarios, rng_seed=0, contingency_order=1,
    config=None):
    """Generate a labelled trajectory dataset.

    Each scenario samples a load scale, re-solves the equilibrium, picks
    contingency_order distinct fault lines and a clearing duration in
    (0, 0.3] s, then integrates and labels. Scenarios are simulated on the
    worker pool (see the workers module).

    Args:
        spec: The PowerSystemSpec.
        n_scenarios: Number of scenarios.
        rng_seed: Dataset seed (integer or sequence of integers).
        contingency_order: Number of concurrently faulted lines.
        config: SimulationConfig.

    Returns:
        List of Trajectory objects (skipped scenarios are omitted).
    """
    config = SimulationConfig() if config is None else config
    jobs = [(spec, i, rng_seed, contingency_order, config)
        for i in range(n_scenarios)]
    trajs = workers.map_ordered(_simulate_job, jobs)
    trajs = [t for t in trajs if t is not None]
    if trajs:
        n_unstable = sum(t.label == UNSTABLE for t in trajs)
        logger.info("generated %d trajectories (%d unstable) on %s",
            len(trajs), n_unstable, spec.name or "system")
    return trajs
