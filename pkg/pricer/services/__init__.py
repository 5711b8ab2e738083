"""Services Package - Pricing pipeline stages"""
