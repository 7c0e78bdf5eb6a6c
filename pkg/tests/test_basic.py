"""
Basic tests for the edgeswarm package
"""


def test_import():
    """Test if package imports correctly"""
    import edgeswarm
    from edgeswarm import Simulation, load_scenario, collect

    assert edgeswarm.__version__
    assert callable(collect)
    assert Simulation and load_scenario


def test_simulation_creation():
    """Test if a simulation can be built from a built-in scenario"""
    from edgeswarm import Simulation, load_scenario

    sim = Simulation(load_scenario("firefighter_indoor"), seed=1)

    assert sim.engine.clock == 0.0
    assert list(sim.devices) == ["firefighter-1"]
    assert sim.config.lifecycle.n_bad == 5


def test_message_builder():
    """Test message builders"""
    from edgeswarm.messages import MessageBuilder

    builder = MessageBuilder()

    msg = builder.deploy_request("drug-mlp", "dev-1")
    assert msg["type"] == "DeployRequest"
    assert msg["agent_id"] == "drug-mlp"


def test_utils():
    """Test utility functions"""
    from edgeswarm.utils import parse_seed_range, to_seconds, to_us

    assert to_us(0.25) == 250000
    assert to_seconds(to_us(12.5)) == 12.5
    assert parse_seed_range("1..20") == list(range(1, 21))


def test_exceptions():
    """Test custom exceptions"""
    from edgeswarm.exceptions import (
        EdgeSwarmError,
        MismatchedRuns,
        ScenarioValidationError,
        TransferFailed,
        ValidationError,
    )

    error = EdgeSwarmError("Test error")
    assert str(error) == "Test error"

    assert issubclass(MismatchedRuns, ValidationError)
    assert ScenarioValidationError("bad", path="devices[0]").path == "devices[0]"
    assert TransferFailed("lost").record is None


if __name__ == "__main__":
    print("=" * 50)
    print("[TEST] Testing edgeswarm Package")
    print("=" * 50)

    tests = [
        test_import,
        test_simulation_creation,
        test_message_builder,
        test_utils,
        test_exceptions,
    ]

    passed = 0
    failed = 0

    for test in tests:
        print(f"\n[RUN] Running: {test.__name__}")
        try:
            test()
            passed += 1
        except Exception as e:
            print(f"[FAIL] Test crashed: {e}")
            failed += 1

    print("\n" + "=" * 50)
    print(f"[PASS] Passed: {passed}")
    print(f"[FAIL] Failed: {failed}")
    print("=" * 50)
