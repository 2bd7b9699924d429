"""
Plots via Matplotlib
--------------------

Static plots of run records: the training loss curves of ``loss.csv``,
and the few-shot curve of ``fewshot.csv``.

**Note**: This module imports ``matplotlib`` (with its non-interactive
``Agg`` backend) and ``pandas``, which must be installed.

"""
import pathlib

import matplotlib
import pandas

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402


LOSS_COLUMNS = ('d_loss', 'g_adv', 'content', 'feature')

CURVE_COLUMNS = ('precision', 'recall', 'hmean')


def _save(figure, path):
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamp in the PNG metadata: identical records plot identically
    figure.savefig(path, format='png', metadata={'Software': None})
    plt.close(figure)
    return path


def plot_loss_curves(records, path):
    """Plot the loss components of ``records`` (a loss log path, or
    ``DataFrame``) against step, one panel per component.

    """
    df = records if isinstance(records, pandas.DataFrame) else pandas.read_csv(records)

    (figure, axes) = plt.subplots(len(LOSS_COLUMNS), 1, sharex=True,
                                  figsize=(6, 2 * len(LOSS_COLUMNS)))
    for (axis, column) in zip(axes, LOSS_COLUMNS):
        df.plot(x='step', y=column, ax=axis, legend=False, color='k', linewidth=1)
        axis.set(ylabel=column)

    axes[-1].set(xlabel='step')
    figure.suptitle('training losses')
    figure.tight_layout()
    return _save(figure, path)


def plot_fewshot_curve(records, path):
    """Plot precision, recall and hmean of a few-shot curve (path, or
    ``DataFrame``) against the number of training documents.

    """
    df = records if isinstance(records, pandas.DataFrame) else pandas.read_csv(records)

    (figure, axis) = plt.subplots(figsize=(6, 4))
    for (column, marker) in zip(CURVE_COLUMNS, 'os^'):
        df.plot(x='n', y=column, ax=axis, marker=marker, label=column)

    axis.set(xlabel='training documents (n)', ylabel='score', ylim=(0, 1.05))
    axis.set_xticks(df['n'])
    axis.grid(True, alpha=0.3)
    figure.suptitle('few-shot localization')
    figure.tight_layout()
    return _save(figure, path)
