"""Core Package - Configuration, logging, errors and scenario schema"""
