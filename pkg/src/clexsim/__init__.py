"""Simulation and analysis toolkit for CLEX interconnection networks."""

from clexsim.topology import (
    ClexTopology,
    Embedding,
    TopologyError,
    TorusTopology,
    build_clex,
    diameter,
    diameter_bound,
    embed,
    level_out_neighbors,
    torus_bisection_edges,
)
from clexsim.clique_router import BalancerConfig, CliqueStats, k_update, run_clique_instance
from clexsim.hierarchical_router import Message, RouterConfig, RoutingStats, relay_candidates, route, route_arrays, valiant_redistribute
from clexsim.all_to_all import AtaStats, clex_all_to_all, torus_all_to_all
from clexsim.sim_engine import ExperimentReport, LevelMetrics, Traffic, TrafficSpec, generate_traffic, run_experiment
from clexsim.metrics import (
    BandwidthModel,
    DelayModel,
    bandwidth_gain,
    delay,
    hop_ratio,
    propagation_ratio,
    torus_effective_bandwidth,
)

__version__ = "0.1.0"
