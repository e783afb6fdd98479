//! Assets compiled into the library: the default attribute set, the COCO
//! object list and its macro mapping, and the scene hierarchy template.

pub const TABLE1_SCHEMA_TOML: &str = include_str!("../../assets/table1_schema.toml");
pub const COCO_MACRO_TOML: &str = include_str!("../../assets/mappings/coco_macro.toml");
pub const SCENE_TEMPLATE_TOML: &str =
    include_str!("../../assets/mappings/places365_scene_template.toml");

/// COCO detection classes in canonical index order.
pub const COCO_CLASSES: [&str; 80] = [
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train", "truck", "boat",
    "traffic light", "fire hydrant", "stop sign", "parking meter", "bench", "bird", "cat", "dog",
    "horse", "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella",
    "handbag", "tie", "suitcase", "frisbee", "skis", "snowboard", "sports ball", "kite",
    "baseball bat", "baseball glove", "skateboard", "surfboard", "tennis racket", "bottle",
    "wine glass", "cup", "fork", "knife", "spoon", "bowl", "banana", "apple", "sandwich", "orange",
    "broccoli", "carrot", "hot dog", "pizza", "donut", "cake", "chair", "couch", "potted plant",
    "bed", "dining table", "toilet", "tv", "laptop", "mouse", "remote", "keyboard", "cell phone",
    "microwave", "oven", "toaster", "sink", "refrigerator", "book", "clock", "vase", "scissors",
    "teddy bear", "hair drier", "toothbrush",
];

/// Named class-list presets usable as `classes = "<preset>"` in a config.
pub fn class_preset(name: &str) -> Option<Vec<String>> {
    match name {
        "coco" => Some(COCO_CLASSES.iter().map(|s| s.to_string()).collect()),
        _ => None,
    }
}
