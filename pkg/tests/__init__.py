"""Unit tests for the GeoGAN package"""
