import pytest

from entroute.netmodel import FidelityGrid, OperationParams, make_network


@pytest.fixture
def neutral_params():
    """Lossless, latency-free operations except the structural 3/2 terms."""
    return OperationParams(p_s=1.0, t_s=0.0, t_p=0.0, t_c=0.0, p_f=1.0)


@pytest.fixture
def grid01():
    return FidelityGrid.uniform(step=0.01)


@pytest.fixture
def grid005():
    return FidelityGrid.uniform(step=0.005)


@pytest.fixture
def two_link_path():
    """s - m - d with rate-100 links of fidelity 0.95."""
    return make_network(
        ["s", "m", "d"],
        {("s", "m"): (100.0, 0.95), ("m", "d"): (100.0, 0.95)},
    )
