"""Test suite for hgfc"""
