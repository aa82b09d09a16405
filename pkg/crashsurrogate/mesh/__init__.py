from crashsurrogate.mesh.graph import MeshGraph, NodeState, Trajectory, NodeRole, make_static_features, undirected_to_edges
from crashsurrogate.mesh.features import NormStats, FeatureLayout, estimate_velocity, fit_norm_stats, assemble_node_features, \
    build_edge_features, target_accelerations
