"""Cluster-randomized and stratified designs"""
from designs.cluster import ClusterView, cluster_total_level, cluster_unit_level, cluster_view
from designs.stratified import StratifiedPlan, stratified

__all__ = [
    "ClusterView",
    "StratifiedPlan",
    "cluster_total_level",
    "cluster_unit_level",
    "cluster_view",
    "stratified",
]
