"""Utilities Package - Random streams and exports"""
