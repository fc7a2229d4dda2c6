# Image augmentations
from augsched.augment.transforms import (
    AugmentationSpec,
    apply,
    batch_apply,
    make_augmentation,
    sample_crop_box,
)
