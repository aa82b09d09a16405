from crashsurrogate.helpers.config import config, config_file
