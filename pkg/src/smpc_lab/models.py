"""Built-in physical models, selectable by name from scenario files."""

import numpy as np

from .core import CostWeights, LinearPlant, NonlinearModel

__all__ = ['example_2_1', 'example_2_2', 'polynomial', 'linear', 'BUILTIN_MODELS',
           'build_model', 'EXAMPLE_2_1_WEIGHTS', 'EXAMPLE_2_2_WEIGHTS', 'DEFAULT_WEIGHTS']


def example_2_1():
    """``b = exp(-Y) + exp(u) - 2``, ``sigma = exp(u) - 1``; linearization [-1, 1; 0, 1]."""
    return NonlinearModel(
        drift=lambda y, u: np.exp(-y) + np.exp(u) - 2.0,
        diffusion=lambda y, u: np.exp(u) - 1.0,
        linearization=LinearPlant.scalar(-1.0, 1.0, 0.0, 1.0),
        name='example_2_1')


def example_2_2():
    """Deterministic ``b = Y + Y^2/2 - u``, ``sigma = 0``; linearization [1, -1; 0, 0]."""
    return polynomial([[0.0, -1.0], [1.0, 0.0], [0.5, 0.0]], [[0.0]], name='example_2_2')


def _poly_eval(coeffs, y, u):
    out = np.zeros(np.broadcast_shapes(y.shape, u.shape))
    for i, row in enumerate(coeffs):
        for j, c in enumerate(row):
            if c:
                out = out + c * y ** i * u ** j
    return out


def polynomial(drift_coeffs, diffusion_coeffs, name='polynomial'):
    """Scalar polynomial model; ``coeffs[i][j]`` multiplies ``Y**i * u**j``.

    The constant terms must vanish; the linearization is read off the
    first-order coefficients.
    """
    b = [list(map(float, row)) for row in drift_coeffs]
    s = [list(map(float, row)) for row in diffusion_coeffs]

    def coef(c, i, j):
        return c[i][j] if i < len(c) and j < len(c[i]) else 0.0

    lin = LinearPlant.scalar(coef(b, 1, 0), coef(b, 0, 1), coef(s, 1, 0), coef(s, 0, 1))
    order = max(len(b) + max(map(len, b)), len(s) + max(map(len, s))) - 2
    return NonlinearModel(
        drift=lambda y, u: _poly_eval(b, y, u),
        diffusion=lambda y, u: _poly_eval(s, y, u),
        linearization=lin, growth_order=max(order, 1), name=name)


def linear(A, B, C, D, name='linear'):
    return NonlinearModel.from_linear(LinearPlant(A, B, C, D), name=name)


EXAMPLE_2_1_WEIGHTS = CostWeights([[2.5]], [[1.0]], [[1.0]])
EXAMPLE_2_2_WEIGHTS = CostWeights([[1.0]], [[1.0 / 3.0]], [[1.0]])

BUILTIN_MODELS = {
    'example_2_1': example_2_1,
    'example_2_2': example_2_2,
    # same physical system; open/closed loop differ only in controller wiring
    'example_2_2_closed_loop': example_2_2,
    'example_2_2_open_loop': example_2_2,
}

DEFAULT_WEIGHTS = {
    'example_2_1': EXAMPLE_2_1_WEIGHTS,
    'example_2_2': EXAMPLE_2_2_WEIGHTS,
    'example_2_2_closed_loop': EXAMPLE_2_2_WEIGHTS,
    'example_2_2_open_loop': EXAMPLE_2_2_WEIGHTS,
}


def build_model(name, **params):
    if name == 'polynomial':
        return polynomial(params['drift_coeffs'], params['diffusion_coeffs'])
    if name == 'linear':
        return linear(params['A'], params['B'], params['C'], params['D'])
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise KeyError(f"unknown built-in model {name!r}") from None
    if params:
        raise TypeError(f"model {name!r} takes no parameters")
    return factory()
