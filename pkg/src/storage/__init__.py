"""Array containers and on-disk formats"""
