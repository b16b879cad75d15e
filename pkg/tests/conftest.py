import pytest

from xlmesh.core import TransmissionStrategy
from xlmesh.mac import MacConfig
from xlmesh.routing import DC_MODE
from xlmesh.scenarios import Scenario, TrafficSession, _node

@pytest.fixture
def acceptance_report(request):
    """Line emitter that survives pytest's output capture."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(criterion: str, ok: bool, detail: str) -> None:
        status = "PASS" if ok else "FAIL"
        line = f"[ACCEPTANCE] {criterion}: {status} — {detail}"
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)
        assert ok, f"{criterion}: {detail}"

    return emit


def make_scenario(
    positions,
    sessions=(),
    duration_s=20.0,
    gateway=None,
    rate=2.0,
    arq=True,
    neighbor_override=None,
    pre_joined=True,
    perturbations=(),
    seed=1,
    utility_mode=DC_MODE,
    **kw,
):
    """Small ad hoc scenario: positions is {node_id: (east_m, north_m)}."""
    gateway = gateway if gateway is not None else max(positions)
    nodes = [
        _node(nid, east, north, gateway=(nid == gateway))
        for nid, (east, north) in sorted(positions.items())
    ]
    return Scenario(
        name="test",
        nodes=nodes,
        sessions=list(sessions),
        duration_s=duration_s,
        radio=TransmissionStrategy(rate, 3.5),
        mac=MacConfig(arq_enabled=arq),
        utility_mode=utility_mode,
        neighbor_override=neighbor_override,
        perturbations=list(perturbations),
        pre_joined=pre_joined,
        seed=seed,
        **kw,
    )


@pytest.fixture
def two_node():
    return make_scenario(
        {1: (0.0, 0.0), 2: (400.0, 0.0)},
        sessions=[TrafficSession(src=1, dst=2, pps=50.0, start_s=1.0, stop_s=8.0)],
        duration_s=12.0,
    )
