"""
adtcert - dwell-time certificates and hybrid simulation for switched cascades
"""

import os

from config import VERSION, config

__all__ = ['VERSION', 'get_config']


def get_config(name=None):
    """Configuration class selected by name or ADTCERT_ENV"""
    name = name or os.environ.get('ADTCERT_ENV') or 'default'
    try:
        return config[name]
    except KeyError:
        from adtcert.errors import ConfigError
        raise ConfigError(f"unknown configuration '{name}' (choose from {', '.join(sorted(config))})") from None
