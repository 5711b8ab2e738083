"""Test Package - All tests for the application"""

