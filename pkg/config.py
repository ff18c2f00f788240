import os
from pathlib import Path

# Package version
VERSION = '1.0.0'


def _flag(name):
    return (os.environ.get(name) or '').strip().lower() in ('1', 'true', 'yes', 'on')


class Config:
    """Base configuration"""
    # Results (arcs, reports)
    OUTPUT_DIR = os.environ.get('ADTCERT_OUTPUT_DIR') or './adtcert_results'

    LOG_LEVEL = os.environ.get('ADTCERT_LOG_LEVEL') or 'INFO'

    # Randomized inequality checks
    CHECK_SAMPLES = int(os.environ.get('ADTCERT_CHECK_SAMPLES') or 10000)
    CHECK_BOX = float(os.environ.get('ADTCERT_CHECK_BOX') or 10.0)

    # Simulation defaults
    DT_BASE = 1e-3
    EVENT_TOL = 1e-9

    # Celery configuration
    CELERY_BROKER_URL = os.environ.get('CELERY_BROKER_URL') or 'redis://localhost:6379/0'
    CELERY_RESULT_BACKEND = os.environ.get('CELERY_RESULT_BACKEND') or 'redis://localhost:6379/0'
    # Trials run in-process unless a worker is requested
    CELERY_TASK_ALWAYS_EAGER = not _flag('ADTCERT_ASYNC')

    @classmethod
    def init_app(cls, logger=None):
        """Create the results directory when it is configured explicitly"""
        results_dir_env = os.environ.get('ADTCERT_OUTPUT_DIR')
        if results_dir_env:
            results_dir = Path(results_dir_env)

            # Only create if it's an absolute path (deployment setup)
            if results_dir.is_absolute():
                try:
                    results_dir.mkdir(parents=True, exist_ok=True)
                except (OSError, PermissionError) as e:
                    if logger is not None:
                        logger.warning(f"Could not create results directory {results_dir}: {e}")


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    TESTING = False


class ProductionConfig(Config):
    """Production configuration"""
    DEBUG = False
    TESTING = False
    LOG_LEVEL = os.environ.get('ADTCERT_LOG_LEVEL') or 'WARNING'


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    LOG_LEVEL = 'WARNING'
    CELERY_TASK_ALWAYS_EAGER = True
    CELERY_BROKER_URL = 'memory://'
    CELERY_RESULT_BACKEND = 'cache+memory://'


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
