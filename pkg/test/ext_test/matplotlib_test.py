import pandas
import pytest

from textmap.ext import matplotlib as plots


PNG_SIGNATURE = b'\x89PNG\r\n\x1a\n'


class TestPlots:

    @pytest.fixture(name='losses')
    def loss_records(self):
        return pandas.DataFrame({
            'step': [1, 2, 3],
            'd_loss': [1.4, 1.3, 1.2],
            'g_adv': [0.7, 0.8, 0.9],
            'content': [0.3, 0.2, 0.1],
            'feature': [0.0, 0.0, 0.0],
        })

    def test_loss_curves(self, tmp_path, losses):
        path = plots.plot_loss_curves(losses, tmp_path / 'plots' / 'loss.png')

        assert path == tmp_path / 'plots' / 'loss.png'
        assert path.read_bytes().startswith(PNG_SIGNATURE)

    def test_loss_curves_from_csv(self, tmp_path, losses):
        losses.to_csv(tmp_path / 'loss.csv', index=False)

        path = plots.plot_loss_curves(tmp_path / 'loss.csv', tmp_path / 'loss.png')
        assert path.read_bytes().startswith(PNG_SIGNATURE)

    def test_reproducible(self, tmp_path, losses):
        first = plots.plot_loss_curves(losses, tmp_path / 'a.png').read_bytes()
        second = plots.plot_loss_curves(losses, tmp_path / 'b.png').read_bytes()

        assert first == second

    def test_fewshot_curve(self, tmp_path):
        curve = pandas.DataFrame({
            'n': [1, 2, 3],
            'precision': [0.5, 0.7, 0.8],
            'recall': [0.4, 0.6, 0.9],
            'hmean': [0.44, 0.65, 0.85],
        })

        path = plots.plot_fewshot_curve(curve, tmp_path / 'fewshot.png')
        assert path.read_bytes().startswith(PNG_SIGNATURE)
