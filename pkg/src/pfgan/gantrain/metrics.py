"""Metrics CSV rows, one per training step."""
import csv

from ..errors import StorageError

HEADER = ["step", "phase", "mode", "L_T", "L_D", "L_G", "score_t", "score_f",
          "accuracy", "s_g", "s_d", "lr_g", "lr_d"]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_row(r):
    return [_cell(getattr(r, name)) for name in HEADER]


class MetricsWriter:
    def __init__(self, path):
        self.path = path
        try:
            self._fh = open(path, "w", newline="", encoding="ascii")
        except OSError as exc:
            raise StorageError(f"cannot open metrics file {path}: {exc}") from exc
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(HEADER)

    def write(self, report):
        self._w.writerow(report_row(report))

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
