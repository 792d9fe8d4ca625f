"""Partial TSDF scan to explicit triangle mesh via graph networks."""
