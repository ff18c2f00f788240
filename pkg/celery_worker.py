#!/usr/bin/env python3
"""
Celery worker configuration for adtcert batch trials
Run with: celery -A celery_worker.celery worker --loglevel=info
"""

from dotenv import load_dotenv
from celery import Celery

# Load environment variables from .env file
load_dotenv()

from adtcert import get_config  # noqa: E402

cfg = get_config()

# Initialize Celery with config
celery = Celery(
    'adtcert',
    broker=cfg.CELERY_BROKER_URL,
    backend=cfg.CELERY_RESULT_BACKEND
)

# Celery configuration
celery.conf.update(
    task_serializer='json',
    accept_content=['json'],
    result_serializer='json',
    timezone='UTC',
    enable_utc=True,
    broker_connection_retry_on_startup=True,
    # Without ADTCERT_ASYNC=1 trials run in the calling process
    task_always_eager=cfg.CELERY_TASK_ALWAYS_EAGER,
)

# Import tasks to register them with Celery
# This must be done after Celery is configured
from adtcert import tasks  # noqa: E402,F401
