"""Service Layer Unit Tests"""

