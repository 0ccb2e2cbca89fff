import logging

from dpqca.logging_hooks import LoggingHook


def captured_logger(name):
    records = []

    class ListHandler(logging.Handler):
        def emit(self, record):
            records.append(record)

    logger = logging.getLogger(name)
    logger.handlers = [ListHandler()]
    logger.setLevel(logging.DEBUG)
    logger.propagate = False
    return logger, records


def test_hook_reports_trace_drift():
    logger, records = captured_logger("dpqca.test.drift")
    hook = LoggingHook(logger, name="p=0.7")
    hook.on_round(round_index=3, record={"n": 0.5, "S": 0.1, "trace_drift": 1e-3, "max_bond": 8})
    warnings = [r for r in records if r.levelno == logging.WARNING]
    assert len(warnings) == 1
    assert "trace drift" in warnings[0].getMessage()


def test_hook_thins_round_messages():
    logger, records = captured_logger("dpqca.test.every")
    hook = LoggingHook(logger, every=5)
    hook.on_start(rounds=10, metadata={"p": 0.7})
    for r in range(1, 11):
        hook.on_round(round_index=r, record={"n": 1.0})
    hook.on_finish(rounds=10, record={"n": 0.9})
    debug = [r for r in records if r.levelno == logging.DEBUG]
    assert len(debug) == 2
    assert "final n=0.9" in records[-1].getMessage()


def test_hook_tolerates_sparse_records():
    logger, records = captured_logger("dpqca.test.sparse")
    LoggingHook(logger).on_round(round_index=0, record={})
    LoggingHook(logger).on_finish(rounds=0, record=None)
    assert len(records) == 2
