import shutil
from pathlib import Path

import pytest

from qsmpc_plot.cli import main
from qsmpc_plot.figures import FigureSpec, SchemaError, plot_fidelity_curves, plot_scaling_table

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def golden_dir(tmp_path):
    for f in GOLDEN.iterdir():
        shutil.copy(f, tmp_path / f.name)
    return tmp_path


class TestCliFigures:
    @pytest.mark.parametrize("figure", ["fid", "compare", "scaling", "ising"])
    def test_all_figures_render(self, figure, golden_dir, tmp_path):
        out = tmp_path / "figs" / f"{figure}.png"
        rc = main(["--figure", figure, "--in", str(golden_dir), "--out", str(out)])
        assert rc == 0
        assert out.exists() and out.stat().st_size > 0
        assert out.with_suffix(".svg").exists()

    def test_scaling_table_verbatim(self, golden_dir, tmp_path):
        out = tmp_path / "scaling.png"
        rc = main(["--figure", "scaling", "--in", str(golden_dir), "--out", str(out)])
        assert rc == 0
        md = out.with_suffix(".md").read_text()
        for value in ("0.9997", "0.9991", "0.9980", "0.9941", "0.9749"):
            assert f"| {value} |" in md

    def test_missing_csv_fails_cleanly(self, tmp_path, capsys):
        rc = main(["--figure", "fid", "--in", str(tmp_path), "--out", str(tmp_path / "x.png")])
        assert rc == 2
        assert "does not exist" in capsys.readouterr().err
        assert not (tmp_path / "x.png").exists()


class TestSchemaHandling:
    def test_empty_csv_rejected(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        spec = FigureSpec(csv_paths=[str(empty)], output=str(tmp_path / "o.png"))
        with pytest.raises(SchemaError, match="empty"):
            plot_fidelity_curves([str(empty)], spec)

    def test_missing_column_named(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,value\n0,1\n")
        spec = FigureSpec(csv_paths=[str(bad)], output=str(tmp_path / "o.png"))
        with pytest.raises(SchemaError, match="mean_fidelity"):
            plot_fidelity_curves([str(bad)], spec)

    def test_single_row_scaling(self, tmp_path):
        csv = tmp_path / "scaling.csv"
        csv.write_text("j,dim,terminal_mean_fidelity,stderr,n_paths\n1,3,0.9997,0.001,1000\n")
        spec = FigureSpec(csv_paths=[str(csv)], output=str(tmp_path / "s.png"))
        images, md = plot_scaling_table(str(csv), spec)
        assert "| 1 | 0.9997 |" in md.read_text()

    def test_nonexistent_input_in_spec(self, tmp_path):
        with pytest.raises(SchemaError):
            FigureSpec(csv_paths=[str(tmp_path / "nope.csv")], output="o.png")


class TestDeterminism:
    def test_repeat_render_byte_identical(self, golden_dir, tmp_path):
        outs = []
        for i in range(2):
            out = tmp_path / f"r{i}" / "fid.png"
            main(["--figure", "fid", "--in", str(golden_dir), "--out", str(out)])
            outs.append(out)
        assert outs[0].read_bytes() == outs[1].read_bytes()
        assert (
            outs[0].with_suffix(".svg").read_bytes()
            == outs[1].with_suffix(".svg").read_bytes()
        )
