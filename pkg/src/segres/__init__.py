"""Joint restoration and multiphase segmentation."""
