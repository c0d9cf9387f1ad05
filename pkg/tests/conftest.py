import pytest

from schedlab.fixtures import fig2a, fig2b, fig3
from schedlab.scheduler import drive
from schedlab.seqspec import make_structure

STRUCTURE_NAMES = ("sorted-list", "bst", "skiplist")


@pytest.fixture(params=STRUCTURE_NAMES)
def structure(request):
    return make_structure(request.param)


@pytest.fixture(scope="session")
def fig2a_case():
    w, s = fig2a()
    return w, s


@pytest.fixture(scope="session")
def fig2b_case():
    w, s = fig2b()
    return w, s


@pytest.fixture(scope="session")
def fig3_case():
    w, s = fig3()
    return w, s


@pytest.fixture(scope="session")
def fig3_history(fig3_case):
    w, s = fig3_case
    res = drive("hoh", w, s)
    assert res.accepted
    return res.history
