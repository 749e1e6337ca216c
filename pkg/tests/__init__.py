"""Tests for evgraph"""
