"""Differentially private outsourced storage: atomic bucketized stores,
DP-padded ORAM, dynamic updates and an efficiency benchmark."""

from .atomic_point import point_query, point_setup_hashed, point_setup_plain
from .atomic_range import range_query, range_setup
from .crypto_store import DUMMY, LeakageTrace, MockCipher, Record, RecordKind, ServerStore
from .dp import Mechanism, PrivacyBudget, make_rng, solve_bucket_offset, solve_min_offset
from .dporam import DpOramSystem, dporam_query, dporam_setup
from .dynamic import DynamicDpOram, Update, dynamic_setup, make_dynamic
from .errors import (
    BucketOverflowError,
    BudgetExceededError,
    CapacityError,
    DPStoreError,
    OramOverflowError,
    ParameterError,
    ProtocolError,
    UndershootError,
    UnsupportedOperationError,
)
from .oram import LinearOram, Op, PathOram, oram_access, oram_init
from .queries import AttributeQuery, PointQuery, RangeQuery, plaintext_filter
from .sanitizers import build_attribute_index, build_point_histogram, build_range_tree

__all__ = [
    "AttributeQuery", "BucketOverflowError", "BudgetExceededError", "CapacityError", "DPStoreError",
    "DUMMY", "DpOramSystem", "DynamicDpOram", "LeakageTrace", "LinearOram", "Mechanism", "MockCipher",
    "Op", "OramOverflowError", "ParameterError", "PathOram", "PointQuery", "PrivacyBudget",
    "ProtocolError", "RangeQuery", "Record", "RecordKind", "ServerStore", "UndershootError",
    "UnsupportedOperationError", "Update", "build_attribute_index", "build_point_histogram",
    "build_range_tree", "dporam_query", "dporam_setup", "dynamic_setup", "make_dynamic", "make_rng",
    "oram_access", "oram_init", "plaintext_filter", "point_query", "point_setup_hashed",
    "point_setup_plain", "range_query", "range_setup", "solve_bucket_offset", "solve_min_offset",
]
