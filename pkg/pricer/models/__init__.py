"""Models Package - Domain dataclasses and coefficient catalog"""
