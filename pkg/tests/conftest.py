import numpy as np
import pytest

from qcanvas.model import ElementParams
from qcanvas.scc import simulate_pair
from qcanvas.toy_params import toy_table


def s_element(symbol="X", onsite=-0.5, u=0.4, n_valence=0.5, hop=0.5, decay=1.0,
              overlap=0.0, rep_a=1.0, rep_b=1.0, z=1):
    """Single-s-shell element with hand-chosen parameters."""
    return ElementParams(symbol=symbol, z=z, shells=("s",), onsite=(onsite,), hubbard_u=u,
                         n_valence=n_valence, hop_scale=hop, hop_decay=decay,
                         overlap_scale=overlap, overlap_decay=decay, rep_a=rep_a, rep_b=rep_b)


@pytest.fixture(scope="session")
def toy():
    return toy_table()


@pytest.fixture(scope="session")
def sample_records(toy):
    pairs = [("Li", "Li"), ("C", "O"), ("Na", "Cl"), ("N", "N"), ("B", "F")]
    return [simulate_pair(toy[a], toy[b], 0.0) for a, b in pairs]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
