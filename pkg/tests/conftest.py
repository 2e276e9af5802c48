import numpy as np
import pytest

from overparam.models import (
    GLMModel,
    LinearModel,
    LowRankModel,
    ShallowNetModel,
    tanh_linear,
)


def model_zoo(seed):
    """One small random instance of every model family, plus a matching theta."""
    rng = np.random.default_rng(seed)
    act = tanh_linear(0.3)
    out = {}

    X = rng.standard_normal((4, 7))
    y = rng.standard_normal(4)
    out["linear"] = (LinearModel(X, y), rng.standard_normal(7))

    Xg = rng.standard_normal((5, 9))
    yg = rng.standard_normal(5)
    out["glm"] = (GLMModel(Xg, yg, act), rng.standard_normal(9))

    d, r, n = 4, 2, 5
    Xs = rng.standard_normal((n, d, d))
    yl = rng.standard_normal(n)
    out["lowrank"] = (LowRankModel(Xs, yl, d, r), rng.standard_normal(d * r))

    nn, dd, kk = 5, 6, 3
    Xn = rng.standard_normal((nn, dd))
    yn = rng.standard_normal(nn)
    v = rng.standard_normal(kk)
    v /= np.linalg.norm(v)
    out["net"] = (ShallowNetModel(Xn, yn, v, act), rng.standard_normal(kk * dd))
    return out


@pytest.fixture(params=["linear", "glm", "lowrank", "net"])
def family(request):
    return request.param
