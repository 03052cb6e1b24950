import numpy as np
import pytest

from utils.parallel import map_batches, mean_and_stderr, split_batches
from utils.timer import Timer, format_time
from utils.validators import (
    ContractError,
    DomainError,
    IntegrationError,
    NumericalError,
    ParabolicError,
    ValidationError,
    parse_float_sequence,
    parse_input_sequence,
    validate_count,
    validate_hermitian,
    validate_positive,
    validate_rank,
    validate_time_grid,
    validate_unitary,
)


def test_exception_hierarchy_maps_to_exit_classes():
    assert issubclass(DomainError, ValidationError)
    assert issubclass(ParabolicError, DomainError)
    assert issubclass(ContractError, ValidationError)
    assert not issubclass(NumericalError, ValidationError)
    err = IntegrationError("boom", node=3, path_index=17)
    assert (err.node, err.path_index) == (3, 17)


def test_validation_error_collects_messages():
    err = ValidationError("two problems", ["a", "b"])
    assert err.errors == ["a", "b"]
    assert ValidationError("single").errors == ["single"]


def test_validate_positive():
    assert validate_positive(1e-9, "t")
    assert validate_positive(0.0, "t", allow_zero=True)
    with pytest.raises(DomainError):
        validate_positive(0.0, "t")
    with pytest.raises(DomainError):
        validate_positive(float("nan"), "t")
    with pytest.raises(DomainError):
        validate_positive(-1.0, "t", allow_zero=True)


def test_validate_count_and_rank():
    assert validate_count(100, "N", 100)
    with pytest.raises(DomainError):
        validate_count(99, "N", 100)
    with pytest.raises(DomainError):
        validate_count(2.5, "N", 1)
    with pytest.raises(ContractError):
        validate_rank(1, 2)


def test_validate_time_grid():
    assert validate_time_grid([0.1, 0.2, 0.4], min_length=3)
    assert validate_time_grid([0.4, 0.2, 0.1], increasing=False)
    with pytest.raises(DomainError):
        validate_time_grid([0.1, 0.1], min_length=2)
    with pytest.raises(DomainError):
        validate_time_grid([0.0, 1.0])
    with pytest.raises(DomainError):
        validate_time_grid([0.1], min_length=2)


def test_hermitian_and_unitary_checks():
    assert validate_hermitian(np.array([[1.0, 1j], [-1j, 2.0]]))
    with pytest.raises(ContractError):
        validate_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert validate_unitary(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ContractError):
        validate_unitary(np.eye(2) * 1.1)


def test_parse_sequences():
    assert parse_input_sequence(" a, b ,,c ") == ["a", "b", "c"]
    assert parse_float_sequence("0.25, 0.5, 1") == [0.25, 0.5, 1.0]
    with pytest.raises(ValidationError):
        parse_input_sequence("   ")
    with pytest.raises(ValidationError):
        parse_float_sequence("1, x")


def test_batches_are_fixed_by_size_not_workers():
    batches = split_batches(10, 4)
    assert [b.tolist() for b in batches] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]


def test_map_batches_is_deterministic_across_workers():
    def square(batch):
        return batch.astype(float) ** 2, batch % 2 == 0

    one = map_batches(square, 37, workers=1, batch_size=5)
    four = map_batches(square, 37, workers=4, batch_size=5)
    assert np.array_equal(one[0], four[0])
    assert np.array_equal(one[1], four[1])
    assert np.array_equal(one[0], np.arange(37.0) ** 2)


def test_mean_and_stderr_complex():
    samples = np.array([[1 + 1j], [1 - 1j], [3 + 1j], [3 - 1j]])
    mean, stderr = mean_and_stderr(samples)
    assert mean[0] == pytest.approx(2.0)
    expected = np.sqrt(np.var([1, 1, 3, 3], ddof=1) + np.var([1, -1, 1, -1], ddof=1)) / 2
    assert stderr[0] == pytest.approx(expected)


def test_timer_and_format():
    with Timer() as timer:
        timer.lap("uno")
        timer.lap("dos")
    assert timer.elapsed >= timer.laps["uno"] + timer.laps["dos"] - 1e-9
    assert timer.summary().startswith(format_time(timer.elapsed))
    assert "(uno " in timer.summary()
    assert format_time(5e-7).endswith("ns")
    assert format_time(2.0) == "2.0000 seg"
    assert format_time(0.002).endswith("ms")
    with pytest.raises(ValueError):
        Timer().stop()
    with pytest.raises(ValueError):
        Timer().lap("x")
