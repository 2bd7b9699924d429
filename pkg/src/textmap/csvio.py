"""
csvio
-----

Encode run records -- loss curves, few-shot curves -- as CSV.

"""
import csv
import io
import pathlib

from . import baseio


def encode_csv(rows, *writer_args, writer=csv.writer, write_header=False, **writer_kwargs):
    r"""Encode the specified iterable of ``rows`` into CSV text.

    For example::

        >>> encode_csv([(1, 0.5), (2, 0.25)])
        '1,0.5\r\n2,0.25\r\n'

    Rows of ``dict`` may be encoded via ``csv.DictWriter``, optionally
    preceded by their header::

        >>> encode_csv(
        ...     [{'step': 1, 'content': 0.5}],
        ...     writer=csv.DictWriter,
        ...     fieldnames=('step', 'content'),
        ...     write_header=True,
        ... )
        'step,content\r\n1,0.5\r\n'

    """
    out = io.StringIO()
    csv_writer = writer(out, *writer_args, **writer_kwargs)
    if write_header:
        csv_writer.writeheader()
    csv_writer.writerows(rows)
    return out.getvalue()


def write_records(path, records, fieldnames):
    """Atomically write ``dict`` records to ``path`` as CSV with header."""
    baseio.write_text(path, encode_csv(
        records,
        writer=csv.DictWriter,
        fieldnames=fieldnames,
        write_header=True,
    ))


def read_records(path):
    """Read CSV with header from ``path`` as a list of ``dict``."""
    path = pathlib.Path(path)
    try:
        with path.open(newline='', encoding='utf-8') as fd:
            return list(csv.DictReader(fd))
    except OSError as exc:
        raise baseio.DataError(f"{path}: {exc}") from exc


class CsvRecordLog:
    """Append-only CSV log of ``dict`` records, flushed per record.

    Upon construction, an existing log is kept up to (and including)
    the first ``keep`` records, or the records for which ``keep`` is
    true, when callable; any remainder is discarded.

    """
    def __init__(self, path, fieldnames, keep=None):
        self.path = pathlib.Path(path)
        self.fieldnames = tuple(fieldnames)

        kept = []
        if self.path.exists() and keep is not None:
            records = read_records(self.path)
            if callable(keep):
                kept = [record for record in records if keep(record)]
            else:
                kept = records[:keep]

        write_records(self.path, kept, self.fieldnames)

        self._fd = self.path.open('a', newline='', encoding='utf-8')
        self._writer = csv.DictWriter(self._fd, fieldnames=self.fieldnames)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.close()

    def write(self, record):
        self._writer.writerow(record)
        self._fd.flush()

    def close(self):
        self._fd.close()
