"""Bundled model configuration presets"""
