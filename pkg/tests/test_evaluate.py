import numpy as np
import pytest

from olivine.errors import DataError
from olivine.evaluate import (
    REFERENCE_LABEL, REFERENCE_RESULTS, confusion, derive_metrics, log_curves, metrics_key_values,
    read_curves, render_report,
)
from olivine.train import EpochRecord


def test_two_class_hand_values():
    m = derive_metrics(np.array([[8, 2], [1, 9]]))
    p0, r0 = 8 / 9, 0.8
    f0 = 2 * p0 * r0 / (p0 + r0)
    p1, r1 = 9 / 11, 0.9
    f1 = 2 * p1 * r1 / (p1 + r1)
    assert abs(m.accuracy - 0.85) <= 1e-12
    assert abs(m.precision[0] - p0) <= 1e-12
    assert abs(m.f1[0] - f0) <= 1e-12 and abs(f0 - 0.842105263) < 1e-9
    assert abs(m.macro_f1 - (f0 + f1) / 2) <= 1e-12 and abs(m.macro_f1 - 0.849624060) < 1e-9


@pytest.mark.parametrize("diag", [[3, 4], [1, 1, 1], [5, 2, 7, 1, 9]])
def test_diagonal_is_perfect(diag):
    m = derive_metrics(np.diag(diag))
    assert m.accuracy == 1.0
    assert m.precision == m.recall == m.f1 == [1.0] * len(diag)
    assert m.macro_f1 == 1.0


def test_absent_class_scores_zero():
    m = derive_metrics(np.array([[4, 0, 0], [0, 4, 0], [0, 0, 0]]))
    assert m.f1[2] == 0.0 and abs(m.macro_f1 - 2 / 3) < 1e-12
    with pytest.raises(DataError):
        derive_metrics(np.zeros((2, 2), int))


def test_confusion_counts_and_errors():
    m = confusion([0, 1, 1, 0], [0, 1, 0, 0], 2)
    assert m.tolist() == [[2, 1], [0, 1]]
    with pytest.raises(ValueError):
        confusion([0, 2], [0, 1], 2)
    with pytest.raises(ValueError):
        confusion([0], [0, 1], 2)


def test_curves_round_trip():
    hist = [EpochRecord(1, 1.25, 0.5, 1.5, 0.4), EpochRecord(2, 0.75, 0.8, 0.9, 0.7)]
    data = log_curves(hist)
    assert data.splitlines()[0] == b"epoch,train_loss,train_acc,val_loss,val_acc"
    rows = read_curves(data)
    assert rows[1] == {"epoch": 2, "train_loss": 0.75, "train_acc": 0.8, "val_loss": 0.9, "val_acc": 0.7}


def test_report_reference_rows_are_labelled():
    m = derive_metrics(np.array([[8, 2], [1, 9]]), ["a", "b"])
    plain = render_report(m)
    assert REFERENCE_LABEL not in plain and "85.00%" in plain
    text = render_report(m, REFERENCE_RESULTS)
    lines = [l for l in text.splitlines() if l.startswith(REFERENCE_LABEL)]
    assert len(lines) == 2 and any("94.5" in l for l in lines) and any("92.8" in l for l in lines)
    kv = metrics_key_values(m)
    assert "accuracy = 0.850000" in kv and "confusion.a = 8,2" in kv
