"""Published selection table: confusion counts and the printed 2-decimal metrics.

Columns are (model, cutoff). Rows: tp, tn, fp, fn, accuracy, sensitivity, specificity.
"""

SELECTION_TABLE = {
    ("1-img control", 0.2): (7, 37, 3, 4, 0.86, 0.64, 0.93),
    ("1-img control", 0.3): (12, 33, 3, 3, 0.88, 0.80, 0.92),
    ("3-img control", 0.2): (7, 37, 3, 4, 0.86, 0.64, 0.93),
    ("3-img control", 0.3): (10, 31, 5, 5, 0.80, 0.67, 0.86),
    ("1-img in-field", 0.2): (3, 31, 5, 5, 0.77, 0.38, 0.86),
    ("1-img in-field", 0.3): (8, 26, 5, 5, 0.77, 0.62, 0.84),
    ("3-img in-field", 0.2): (3, 31, 5, 5, 0.77, 0.38, 0.86),
    ("3-img in-field", 0.3): (9, 27, 4, 4, 0.82, 0.69, 0.87),
}

IN_FIELD_TEST_PLOTS = 44
