VARIANT = "test-time augmentation"


def build():
    return VARIANT
