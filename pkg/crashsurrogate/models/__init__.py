from crashsurrogate.models.families import families, list_families, is_valid_family
