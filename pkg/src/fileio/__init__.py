from .clouds import decode_dhpc, encode_dhpc, load_cloud, read_dhpc, read_xyz, save_cloud, write_dhpc, write_xyz
from .dataset import Scene, generate_scenes, load_dataset, write_dataset
from .model_file import decode_model_blocks, encode_model, load_model, save_model

__all__ = [
    "Scene",
    "decode_dhpc",
    "decode_model_blocks",
    "encode_dhpc",
    "encode_model",
    "generate_scenes",
    "load_cloud",
    "load_dataset",
    "load_model",
    "read_dhpc",
    "read_xyz",
    "save_cloud",
    "save_model",
    "write_dataset",
    "write_dhpc",
    "write_xyz",
]
