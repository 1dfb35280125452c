from .adam import AdamState, adam_step
from .autodiff import Node, Tape, grad_of
from .ops import l2_normalize_rows, row_softmax, tanh_map
from .simplex import simplex_project, simplex_project_rows
