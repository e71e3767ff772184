from macc.config import ScenarioConfig


def scenario(n_flows=1, duration=5.0, per=0.0, aqm="droptail", transport="newreno", **env):
    """Default topology with the few knobs tests vary most."""
    sc = ScenarioConfig()
    sc.topology.n_flows = n_flows
    sc.topology.sim_duration = duration
    sc.topology.bottleneck.per = per
    sc.aqm.kind = aqm
    sc.transport.kind = transport
    for k, v in env.items():
        setattr(sc.env, k, v)
    return sc.validate()
