"""Benchmark optimal control problems with analytic or propagated guesses."""

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import interp1d

from collocation.transcription import OcpDefinition
from utils.config import DEFAULT_SEED, EX1_TOLERANCE, EX2_GUESS_CONTROL, EX2_TOLERANCE, GUESS_RK4_STEPS

# Example 1 classic-form control offset
EX1_CLASSIC_CONTROL_SHIFT = 1e-2

# Example 2 constants
EX2_TF = 3.32
EX2_THRUST = 0.1405
EX2_MASS0 = 1.0
EX2_MASS_RATE = 0.0749

# Example 2 state columns; control column 0 is the thrust angle
EX2_ANGLE_CONTROLS = (0,)


@dataclass
class AnalyticSolution:
    """Closed-form optimal state, control and costate."""

    state: Callable[[np.ndarray], np.ndarray]
    control: Callable[[np.ndarray], np.ndarray]
    costate: Callable[[np.ndarray], np.ndarray]
    objective: float


@dataclass
class BenchmarkProblem:
    """A registered problem: the OCP plus what its errors are measured against."""

    name: str
    ocp: OcpDefinition
    analytic: Optional[AnalyticSolution] = None
    angle_controls: Tuple[int, ...] = ()
    default_tolerance: float = 1e-12
    classic_guess: Optional[Callable] = None


# Example 1: scalar problem on [0, 2] with a closed-form solution

def _ex1_a(t: np.ndarray) -> np.ndarray:
    return 1.0 + 3.0 * np.exp(2.5 * t)


def ex1_state(t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return (4.0 / _ex1_a(t))[:, None]


def ex1_control(t) -> np.ndarray:
    return 0.5 * ex1_state(t)


def ex1_costate(t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    denominator = np.exp(-5.0) + 6.0 + 9.0 * np.exp(5.0)
    return (-np.exp(2.0 * np.log(_ex1_a(t)) - 2.5 * t) / denominator)[:, None]


def _ex1_dynamics(t, x, u):
    y, v = x[:, 0], u[:, 0]
    return (2.5 * (-y + y * v - v * v))[:, None]


def _ex1_jac_x(t, x, u):
    return (2.5 * (u[:, 0] - 1.0))[:, None, None]


def _ex1_jac_u(t, x, u):
    return (2.5 * (x[:, 0] - 2.0 * u[:, 0]))[:, None, None]


def _ex1_guess(t):
    return ex1_state(t), ex1_control(t)


def _ex1_classic_guess(t):
    # df/du = 2.5 (y - 2u) vanishes along the exact control, where the classic
    # defect Jacobian loses rank; start the control just below it
    y = ex1_state(t)
    return y, 0.5 * y - EX1_CLASSIC_CONTROL_SHIFT


def example1() -> BenchmarkProblem:
    """
    Minimise -y(2) subject to y' = 2.5(-y + y u - u^2), y(0) = 1.

    The exact solution is used as the initial guess, except by the classic
    form, which starts from the exact state and a shifted control.
    """
    ocp = OcpDefinition(
        n_x=1, n_u=1, n_b=1,
        dynamics=_ex1_dynamics,
        dyn_jac_x=_ex1_jac_x,
        dyn_jac_u=_ex1_jac_u,
        mayer_cost=lambda x0, t0, xf, tf: -xf[0],
        mayer_gradient=lambda x0, t0, xf, tf: (np.zeros(1), -np.ones(1)),
        boundary=lambda x0, t0, xf, tf: np.array([x0[0] - 1.0]),
        boundary_jacobian=lambda x0, t0, xf, tf: (np.ones((1, 1)), np.zeros((1, 1))),
        t0=0.0, tf=2.0,
        guess=_ex1_guess,
        name='ex1',
    )
    analytic = AnalyticSolution(
        state=ex1_state,
        control=ex1_control,
        costate=ex1_costate,
        objective=-4.0 / (1.0 + 3.0 * np.exp(5.0)),
    )
    return BenchmarkProblem(name='ex1', ocp=ocp, analytic=analytic, default_tolerance=EX1_TOLERANCE,
                            classic_guess=_ex1_classic_guess)


# Example 2: orbit raising with states (r, theta, u, v) and thrust angle eps

def ex2_acceleration(t) -> np.ndarray:
    return EX2_THRUST / (EX2_MASS0 - EX2_MASS_RATE * np.asarray(t, dtype=float))


def _ex2_dynamics(t, x, u):
    r, u_r, v = x[:, 0], x[:, 2], x[:, 3]
    eps = u[:, 0]
    a = ex2_acceleration(t)
    return np.stack([
        u_r,
        v / r,
        v * v / r - 1.0 / (r * r) + a * np.sin(eps),
        -u_r * v / r + a * np.cos(eps),
    ], axis=1)


def _ex2_jac_x(t, x, u):
    r, u_r, v = x[:, 0], x[:, 2], x[:, 3]
    jac = np.zeros((x.shape[0], 4, 4))
    jac[:, 0, 2] = 1.0
    jac[:, 1, 0] = -v / (r * r)
    jac[:, 1, 3] = 1.0 / r
    jac[:, 2, 0] = -v * v / (r * r) + 2.0 / r ** 3
    jac[:, 2, 3] = 2.0 * v / r
    jac[:, 3, 0] = u_r * v / (r * r)
    jac[:, 3, 2] = -v / r
    jac[:, 3, 3] = -u_r / r
    return jac


def _ex2_jac_u(t, x, u):
    a = ex2_acceleration(t)
    eps = u[:, 0]
    jac = np.zeros((x.shape[0], 4, 1))
    jac[:, 2, 0] = a * np.cos(eps)
    jac[:, 3, 0] = -a * np.sin(eps)
    return jac


def _ex2_boundary(x0, t0, xf, tf):
    return np.array([
        x0[0] - 1.0,
        x0[1],
        x0[2],
        x0[3] - 1.0,
        xf[2],
        xf[3] - np.sqrt(1.0 / xf[0]),
    ])


def _ex2_boundary_jacobian(x0, t0, xf, tf):
    J0 = np.zeros((6, 4))
    J0[:4, :4] = np.eye(4)
    Jf = np.zeros((6, 4))
    Jf[4, 2] = 1.0
    Jf[5, 0] = 0.5 * xf[0] ** -1.5
    Jf[5, 3] = 1.0
    return J0, Jf


def rk4_propagate(dynamics: Callable, x0: np.ndarray, control: np.ndarray,
                  t0: float, tf: float, steps: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Fixed-step classical Runge-Kutta propagation with a constant control.

    Args:
        dynamics: Vectorised f(t, x, u)
        x0: Initial state (n_x,)
        control: Constant control (n_u,)
        t0, tf: Time span
        steps: Number of steps

    Returns:
        (times of shape (steps+1,), states of shape (steps+1, n_x))
    """
    times = np.linspace(t0, tf, steps + 1)
    states = np.empty((steps + 1, len(x0)))
    states[0] = x0
    u = np.asarray(control, dtype=float)[None, :]

    def f(t, x):
        return dynamics(np.array([t]), x[None, :], u)[0]

    for i in range(steps):
        t, h, x = times[i], times[i + 1] - times[i], states[i]
        k1 = f(t, x)
        k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(t + h, x + h * k3)
        states[i + 1] = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return times, states


def _ex2_guess_factory(steps: int = GUESS_RK4_STEPS, control: float = EX2_GUESS_CONTROL):
    x0 = np.array([1.0, 0.0, 0.0, 1.0])
    times, states = rk4_propagate(_ex2_dynamics, x0, np.array([control]), 0.0, EX2_TF, steps)
    resample = interp1d(times, states, axis=0, kind='cubic')

    def guess(t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, EX2_TF)
        return resample(t), np.full((t.size, 1), control)

    return guess


def example2() -> BenchmarkProblem:
    """
    Maximise the final orbit radius over t in [0, 3.32] under constant thrust.

    Guess: constant control 0.001 propagated with a fixed-step RK4 integrator.
    """
    ocp = OcpDefinition(
        n_x=4, n_u=1, n_b=6,
        dynamics=_ex2_dynamics,
        dyn_jac_x=_ex2_jac_x,
        dyn_jac_u=_ex2_jac_u,
        mayer_cost=lambda x0, t0, xf, tf: -xf[0],
        mayer_gradient=lambda x0, t0, xf, tf: (np.zeros(4), np.array([-1.0, 0.0, 0.0, 0.0])),
        boundary=_ex2_boundary,
        boundary_jacobian=_ex2_boundary_jacobian,
        t0=0.0, tf=EX2_TF,
        guess=_ex2_guess_factory(),
        name='ex2',
    )
    return BenchmarkProblem(name='ex2', ocp=ocp, angle_controls=EX2_ANGLE_CONTROLS,
                            default_tolerance=EX2_TOLERANCE)


PROBLEMS: Dict[str, Callable[[], BenchmarkProblem]] = {
    'ex1': example1,
    'ex2': example2,
}


def get_problem(name: str, validate: bool = True, seed: int = DEFAULT_SEED) -> BenchmarkProblem:
    """
    Look up a registered problem and check its Jacobians.

    Raises:
        ValueError: For unknown names or inconsistent Jacobians
    """
    if name not in PROBLEMS:
        raise ValueError(f"Unknown problem '{name}', expected one of {sorted(PROBLEMS)}")
    problem = PROBLEMS[name]()
    if validate:
        problem.ocp.validate(seed=seed)
    return problem
