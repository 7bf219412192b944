# Initializer for the entaug.augmentation module
