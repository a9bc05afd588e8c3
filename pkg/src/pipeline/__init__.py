"""One DARv2 pass over a scene and the synthetic scene generator"""
