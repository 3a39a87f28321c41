from app.graph.anchors import AnchorSet, build_anchor_set
from app.graph.batch import GraphBatch, collate_anchor_sets
from app.graph.heads import GraphHead, build_head
from app.graph.loss import multi_view_loss

__all__ = [
    "AnchorSet",
    "GraphBatch",
    "GraphHead",
    "build_anchor_set",
    "build_head",
    "collate_anchor_sets",
    "multi_view_loss",
]
