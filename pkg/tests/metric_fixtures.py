"""Hand-pooled metric fixtures.

Each entry lists (predicted, gold) pairs and the expected pooled values,
written as fractions worked out by hand from the true-positive, predicted and
gold counts (micro F1 = 2 tp / (n_pred + n_gold)).
"""
from fractions import Fraction as Fr

FIXTURES = [
    # name, questions, (micro P, micro R, micro F1, macro F1, hit rate)
    ("exact", [(["a"], ["a"])], (Fr(1), Fr(1), Fr(1), Fr(1), Fr(1))),
    ("extra_prediction", [(["a", "b"], ["a"])], (Fr(1, 2), Fr(1), Fr(2, 3), Fr(2, 3), Fr(1))),
    ("empty_prediction", [([], ["a"])], (Fr(0), Fr(0), Fr(0), Fr(0), Fr(0))),
    ("one_hit_one_empty", [(["a"], ["a"]), ([], ["b", "c"])], (Fr(1), Fr(1, 3), Fr(1, 2), Fr(1, 2), Fr(1, 2))),
    ("partial_and_miss", [(["a", "b", "c"], ["a", "d"]), (["x"], ["y"])], (Fr(1, 4), Fr(1, 3), Fr(2, 7), Fr(1, 5), Fr(1, 2))),
    ("duplicates_and_padding", [(["a", "a", " a "], ["a"])], (Fr(1), Fr(1), Fr(1), Fr(1), Fr(1))),
    ("three_mixed", [(["a", "b"], ["b", "c"]), (["c", "d"], ["c", "d"]), (["e"], ["f", "g"])], (Fr(3, 5), Fr(1, 2), Fr(6, 11), Fr(1, 2), Fr(2, 3))),
    ("skewed_sizes", [(["a", "b", "c", "d", "e"], ["a"]), (["f"], ["f", "g", "h", "i"])], (Fr(1, 3), Fr(2, 5), Fr(4, 11), Fr(11, 30), Fr(1))),
    ("case_sensitive", [(["Drama"], ["drama"])], (Fr(0), Fr(0), Fr(0), Fr(0), Fr(0))),
    ("growing_sets", [(["a"], ["a"]), (["b", "c"], ["b", "c"]), (["d", "e", "f"], ["d", "e", "f"]), ([], ["z"])], (Fr(1), Fr(6, 7), Fr(12, 13), Fr(3, 4), Fr(3, 4))),
    ("two_pooled_from_contract", [(["a", "b"], ["a"]), (["c"], ["c", "d"])], (Fr(2, 3), Fr(2, 3), Fr(2, 3), Fr(2, 3), Fr(1))),
    ("interior_spaces", [(["Guy Pearce", "Guy  Pearce"], ["Guy Pearce"])], (Fr(1, 2), Fr(1), Fr(2, 3), Fr(2, 3), Fr(1))),
]
