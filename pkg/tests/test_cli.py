import io
import json

import numpy as np
import pytest

from core.geometry import flat_torus
from core.stochastic_paths import load_paths
from ui.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main, run_subcommand
from ui.config import (
    apply_environment,
    canonical_echo,
    points_from_flat,
    validate_config,
    with_overrides,
)
from utils.serialization import complex_vector, dumps_record, make_record, to_jsonable, without_created, write_csv
from utils.validators import ValidationError


SMALL_SEMIGROUP = """
[manifold]
variant = flat_torus
dim = 2
lengths = 1.0, 1.0

[potential]
kind = constant
c = 1.0

[run]
t = 0.5
x = 0.5, 0.5
n_paths = 200
dt = 0.05
seed = 9
"""


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestConfig:
    def test_echo_is_a_fixed_point(self):
        echo = canonical_echo(validate_config(SMALL_SEMIGROUP))
        assert canonical_echo(validate_config(echo)) == echo
        assert echo.startswith("[manifold]\nvariant = flat_torus\n")
        assert "n_paths = 200" in echo

    def test_defaults_are_filled(self):
        config = validate_config("[manifold]\nvariant = circle\n")
        assert config.bundle["connection"] == "zero"
        assert config.run["n_paths"] == 10000
        assert config.get("run", "workers", 1) == 1

    def test_errors_carry_line_numbers(self):
        text = "[manifold]\nvariant = klein\n[run]\ndt = -1\nfoo = 2\n"
        with pytest.raises(ValidationError) as info:
            validate_config(text)
        errors = info.value.errors
        assert len(errors) == 3
        assert errors[0].startswith("line 2: [manifold] variant:")
        assert errors[1].startswith("line 4: [run] dt:")
        assert errors[2] == "line 5: [run] foo: clave desconocida"

    def test_unknown_section_and_missing_manifold(self):
        with pytest.raises(ValidationError) as info:
            validate_config("[extra]\nkey = 1\n")
        assert info.value.errors == ["line 1: sección desconocida [extra]",
                                     "[manifold]: falta la sección requerida"]

    def test_cross_checks(self):
        with pytest.raises(ValidationError) as info:
            validate_config("[manifold]\nvariant = flat_torus\ndim = 2\nlengths = 1.0\n")
        assert info.value.errors[0].startswith("line 4: [manifold] lengths:")
        with pytest.raises(ValidationError):
            validate_config("[manifold]\nvariant = sphere2\n[bundle]\nconnection = abelian\n")

    def test_environment_and_overrides(self):
        config = validate_config("[manifold]\nvariant = circle\n")
        assert apply_environment(config, {"FKS_SEED": "42"}).run["seed"] == 42
        with pytest.raises(ValidationError):
            apply_environment(config, {"FKS_WORKERS": "0"})
        assert with_overrides(config, seed=7, workers=None).run["seed"] == 7

    def test_points_from_flat(self):
        assert points_from_flat([1.0, 2.0, 3.0, 4.0], 2) == [[1.0, 2.0], [3.0, 4.0]]
        assert points_from_flat(None, 3) == []
        with pytest.raises(ValidationError):
            points_from_flat([1.0, 2.0, 3.0], 2)


class TestSerialization:
    def test_complex_vector(self):
        assert complex_vector(np.array([1.0 + 0j, 2.0])) == [1.0, 2.0]
        assert complex_vector(np.array([1.0 + 2j])) == [[1.0, 2.0]]

    def test_special_floats(self):
        assert to_jsonable({"a": float("nan"), "b": np.inf, "c": np.int64(3)}) == {"a": None, "b": "inf", "c": 3}

    def test_record_header(self):
        record = make_record("demo", {"value": 1.5}, created="2000-01-01T00:00:00+00:00")
        assert list(record)[:3] == ["schema", "version", "created"]
        assert without_created(record) == {"schema": "demo", "version": 1, "value": 1.5}

    def test_csv_rows(self):
        stream = io.StringIO()
        assert write_csv(["t", "b"], [(0.1, 0.5), (0.01, 0.25)], stream) == 2
        assert stream.getvalue() == "t,b\n0.1,0.5\n0.01,0.25\n"


class TestMain:
    def test_usage_errors(self):
        with pytest.raises(SystemExit) as info:
            main(["teleport"])
        assert info.value.code == EXIT_USAGE
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == EXIT_USAGE

    def test_echo_flag(self, tmp_path, capsys):
        path = write_config(tmp_path, SMALL_SEMIGROUP)
        assert main(["semigroup", "--config", path, "--echo"]) == EXIT_OK
        assert capsys.readouterr().out == canonical_echo(validate_config(SMALL_SEMIGROUP))

    def test_validation_exit_code(self, tmp_path):
        path = write_config(tmp_path, "[manifold]\nvariant = circle\n[run]\ndt = 0\n")
        assert main(["semigroup", "--config", path]) == EXIT_VALIDATION
        assert main(["semigroup", "--config", str(tmp_path / "missing.cfg")]) == EXIT_VALIDATION

    def test_semigroup_record_is_reproducible(self, tmp_path):
        records = []
        for name in ("a", "b"):
            text = SMALL_SEMIGROUP + f"\n[output]\npath = {tmp_path / name}\n"
            assert main(["semigroup", "--config", write_config(tmp_path, text), "-q"]) == EXIT_OK
            records.append(json.loads((tmp_path / f"{name}.json").read_text(encoding="utf-8")))
        assert records[0]["schema"] == "semigroup_estimate"
        assert records[0]["value"] == [pytest.approx(np.exp(-0.5))]
        assert dumps_record(without_created(records[0])) == dumps_record(without_created(records[1]))

    def test_csv_output(self, tmp_path):
        text = SMALL_SEMIGROUP + f"\n[output]\nformat = csv\npath = {tmp_path / 'table'}\n"
        assert main(["semigroup", "--config", write_config(tmp_path, text), "-q"]) == EXIT_OK
        lines = (tmp_path / "table.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "component,re,im,stderr"
        assert len(lines) == 2

    def test_kato_writes_gnuplot_dump(self, tmp_path):
        text = (f"[manifold]\nvariant = circle\n[potential]\nkind = constant\nc = -2.0\n"
                f"[run]\nt_grid = 0.1, 0.01, 0.001\n[output]\npath = {tmp_path / 'kato'}\n")
        assert main(["kato", "--config", write_config(tmp_path, text), "-q"]) == EXIT_OK
        record = json.loads((tmp_path / "kato.json").read_text(encoding="utf-8"))
        assert record["verdict"] == "kato"
        lines = (tmp_path / "kato.dat").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# t b(t)"
        assert len(lines) == 4

    def test_overflow_exits_numeric(self, tmp_path):
        text = ("[manifold]\nvariant = circle\n[potential]\nkind = constant\nc = -1000.0\n"
                "[run]\nt = 1.0\ndt = 0.1\nn_paths = 1000\n")
        assert main(["exp-moment", "--config", write_config(tmp_path, text), "-q"]) == EXIT_NUMERIC

    def test_unknown_runner(self):
        with pytest.raises(ValidationError):
            run_subcommand("teleport", validate_config("[manifold]\nvariant = circle\n"))

    def test_path_dump_and_plot(self, tmp_path):
        text = SMALL_SEMIGROUP + f"\n[output]\npaths = {tmp_path / 'paths.bin'}\ndump_count = 3\n"
        plots = tmp_path / "plots"
        assert main(["semigroup", "--config", write_config(tmp_path, text), "--plot", str(plots), "-q"]) == EXIT_OK
        with open(tmp_path / "paths.bin", "rb") as stream:
            paths = load_paths(stream, flat_torus(1.0, 1.0))
        assert [p.path_index for p in paths] == [0, 1, 2]
        assert paths[0].points.shape == (11, 2)
        assert (plots / "semigroup_estimate.png").exists()

    def test_kato_plot(self, tmp_path):
        text = "[manifold]\nvariant = circle\n[potential]\nkind = constant\nc = -2.0\n[run]\nt_grid = 0.1, 0.01, 0.001\n"
        plots = tmp_path / "plots"
        assert main(["kato", "--config", write_config(tmp_path, text), "--plot", str(plots), "-q"]) == EXIT_OK
        assert list(plots.glob("*.png"))
