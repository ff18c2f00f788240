"""
Celery tasks for batched simulation
"""

import logging

from celery_worker import celery

logger = logging.getLogger(__name__)


def _progress(task, state, meta):
    # eager runs have no result backend to report to
    if not task.request.is_eager:
        task.update_state(state=state, meta=meta)


@celery.task(bind=True)
def run_disturbance_trial_task(self, scenario, level, seed, horizon=None):
    """
    One ISS trial of a cascade scenario under a random piecewise-constant disturbance

    Args:
        scenario: scenario record (JSON-serializable mapping)
        level: disturbance bound D
        seed: trial seed
        horizon: T override

    Returns:
        dict with 'success', 'tail_sup' or 'error' keys
    """
    from adtcert.scenario import disturbance_trial

    try:
        _progress(self, 'RUNNING', {'level': level, 'seed': seed})
        result = disturbance_trial(scenario, level, seed, horizon)
        logger.debug(f"Trial D={level} seed={seed}: tail sup {result['tail_sup']:.4g}")
        return {'success': True, **result}
    except Exception as e:
        logger.error(f"Disturbance trial D={level} seed={seed} failed: {e}")
        return {'success': False, 'error': str(e), 'level': level, 'seed': seed}


@celery.task(bind=True)
def simulate_scenario_task(self, scenario, seed=None, out_dir=None):
    """
    Simulate a scenario and write its arc and report

    Returns:
        dict with 'success', 'report' or 'error' keys
    """
    from adtcert.scenario import Scenario, simulate_scenario
    from adtcert.utils import to_plain

    try:
        scn = Scenario(scenario).with_overrides(seed=seed)
        _progress(self, 'RUNNING', {'scenario': scn.name})
        _, report = simulate_scenario(scn, out_dir=out_dir)
        return {'success': True, 'report': to_plain(report)}
    except Exception as e:
        logger.error(f"Simulation of scenario failed: {e}")
        return {'success': False, 'error': str(e)}
