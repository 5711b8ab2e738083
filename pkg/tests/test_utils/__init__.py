"""Utility Function Unit Tests"""

