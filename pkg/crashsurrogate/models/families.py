"""
Model families. Stage counts, token counts and contact caps follow the published architecture
table; the feature layout per family reproduces its node-feature width (7 / 5 / 11 at dim 3).
"""

families = {
    'MGN': {
        'description': 'MeshGraphNet: local message passing only',
        'l_pre': 6, 'l_attn': 0, 'l_post': 0,
        'global_kind': 'none',
        'role_encoding': 'onehot', 'extra_features': 1,
    },
    'Transolver': {
        'description': 'Transolver: physics attention only',
        'l_pre': 0, 'l_attn': 6, 'l_post': 0,
        'global_kind': 'physics',
        'role_encoding': 'flag', 'extra_features': 0,
    },
    'MeshTransolver': {
        'description': 'Pre-MPNN + sharpened physics attention + post-MPNN',
        'l_pre': 1, 'l_attn': 6, 'l_post': 2,
        'global_kind': 'physics', 'plusplus': True,
        'role_encoding': 'onehot', 'extra_features': 5,
    },
    'MeshTransolver+Contact': {
        'description': 'MeshTransolver with the sparse contact block',
        'l_pre': 1, 'l_attn': 6, 'l_post': 2,
        'global_kind': 'physics', 'plusplus': True,
        'contact_enabled': True, 'contact_k': 32,
        'role_encoding': 'onehot', 'extra_features': 5,
    },
    'GeoTransolver': {
        'description': 'Geometry-aware physics attention only',
        'l_pre': 0, 'l_attn': 4, 'l_post': 0,
        'global_kind': 'geo',
        'role_encoding': 'flag', 'extra_features': 0,
    },
    'GeoFLARE': {
        'description': 'Geometry-aware attention with factorised token interaction',
        'l_pre': 0, 'l_attn': 4, 'l_post': 0,
        'global_kind': 'geo_flare',
        'role_encoding': 'flag', 'extra_features': 0,
    },
    'MeshGeoTransolver': {
        'description': 'Pre-MPNN + contact + geometry-aware attention + post-MPNN',
        'l_pre': 1, 'l_attn': 4, 'l_post': 2,
        'global_kind': 'geo',
        'contact_enabled': True, 'contact_k': 16,
        'role_encoding': 'onehot', 'extra_features': 5,
    },
    'MeshGeoFLARE': {
        'description': 'Pre-MPNN + contact + factorised geometry-aware attention + post-MPNN',
        'l_pre': 1, 'l_attn': 4, 'l_post': 2,
        'global_kind': 'geo_flare',
        'contact_enabled': True, 'contact_k': 16,
        'role_encoding': 'onehot', 'extra_features': 5,
    },
}

scales = {
    'full': {'d_h': 128, 'n_tokens': 128},
    'desk': {'d_h': 32, 'n_tokens': 16},
}


def list_families():
    return {name: layout['description'] for name, layout in families.items()}


def is_valid_family(name):
    return name in families


def is_hybrid(name):
    layout = families[name]
    return layout['l_pre'] > 0 and layout['l_attn'] > 0
