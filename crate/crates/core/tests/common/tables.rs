//! Published layer tables and complexity figures, transcribed for audits.

pub type Dims = (usize, usize, usize);

/// (layer, input c×h×w, output c×h×w) for the SegNet variant with SCNN after
/// the first block and two ConvLSTM layers at 3×128×256.
pub const SEGNET_ROWS: &[(&str, Dims, Dims)] = &[
    ("Conv_1_1", (3, 128, 256), (64, 128, 256)),
    ("Conv_1_2", (64, 128, 256), (64, 128, 256)),
    ("Maxpool1", (64, 128, 256), (64, 64, 128)),
    ("SCNN_Down", (64, 1, 128), (64, 1, 128)),
    ("SCNN_Up", (64, 1, 128), (64, 1, 128)),
    ("SCNN_Right", (64, 64, 1), (64, 64, 1)),
    ("SCNN_Left", (64, 64, 1), (64, 64, 1)),
    ("Conv_2_1", (64, 64, 128), (128, 64, 128)),
    ("Conv_2_2", (128, 64, 128), (128, 64, 128)),
    ("Maxpool2", (128, 64, 128), (128, 32, 64)),
    ("Conv_3_1", (128, 32, 64), (256, 32, 64)),
    ("Conv_3_2", (256, 32, 64), (256, 32, 64)),
    ("Conv_3_3", (256, 32, 64), (256, 32, 64)),
    // Printed as 256×64×128, which contradicts Conv_3_3's output and the
    // pool's own 16×32 result; 256×32×64 is the only consistent reading.
    ("Maxpool3", (256, 32, 64), (256, 16, 32)),
    ("Conv_4_1", (256, 16, 32), (512, 16, 32)),
    ("Conv_4_2", (512, 16, 32), (512, 16, 32)),
    ("Conv_4_3", (512, 16, 32), (512, 16, 32)),
    ("Maxpool4", (512, 16, 32), (512, 8, 16)),
    ("Conv_5_1", (512, 8, 16), (512, 8, 16)),
    ("Conv_5_2", (512, 8, 16), (512, 8, 16)),
    ("Conv_5_3", (512, 8, 16), (512, 8, 16)),
    ("Maxpool5", (512, 8, 16), (512, 4, 8)),
    ("ST-RNN Layer1", (512, 4, 8), (512, 4, 8)),
    ("ST-RNN Layer2", (512, 4, 8), (512, 4, 8)),
    ("MaxUnpool1", (512, 4, 8), (512, 8, 16)),
    ("Up_Conv_5_1", (512, 8, 16), (512, 8, 16)),
    ("Up_Conv_5_2", (512, 8, 16), (512, 8, 16)),
    ("Up_Conv_5_3", (512, 8, 16), (512, 8, 16)),
    ("MaxUnpool2", (512, 8, 16), (512, 16, 32)),
    ("Up_Conv_4_1", (512, 16, 32), (512, 16, 32)),
    ("Up_Conv_4_2", (512, 16, 32), (512, 16, 32)),
    ("Up_Conv_4_3", (512, 16, 32), (256, 16, 32)),
    ("MaxUnpool3", (256, 16, 32), (256, 32, 64)),
    ("Up_Conv_3_1", (256, 32, 64), (256, 32, 64)),
    ("Up_Conv_3_2", (256, 32, 64), (256, 32, 64)),
    ("Up_Conv_3_3", (256, 32, 64), (128, 32, 64)),
    ("MaxUnpool4", (128, 32, 64), (128, 64, 128)),
    ("Up_Conv_2_1", (128, 64, 128), (128, 64, 128)),
    ("Up_Conv_2_2", (128, 64, 128), (64, 64, 128)),
    ("MaxUnpool5", (64, 64, 128), (64, 128, 256)),
    ("Up_Conv_1_1", (64, 128, 256), (64, 128, 256)),
    ("Up_Conv_1_2", (64, 128, 256), (2, 128, 256)),
];

/// Same for the UNet variant.
pub const UNET_ROWS: &[(&str, Dims, Dims)] = &[
    ("In_Conv_1", (3, 128, 256), (64, 128, 256)),
    ("In_Conv_2", (64, 128, 256), (64, 128, 256)),
    ("SCNN_Down", (64, 1, 256), (64, 1, 256)),
    ("SCNN_Up", (64, 1, 256), (64, 1, 256)),
    ("SCNN_Right", (64, 128, 1), (64, 128, 1)),
    ("SCNN_Left", (64, 128, 1), (64, 128, 1)),
    ("Maxpool1", (64, 128, 256), (64, 64, 128)),
    ("Conv_1_1", (64, 64, 128), (128, 64, 128)),
    ("Conv_1_2", (128, 64, 128), (128, 64, 128)),
    ("Maxpool2", (128, 64, 128), (128, 32, 64)),
    ("Conv_2_1", (128, 32, 64), (256, 32, 64)),
    ("Conv_2_2", (256, 32, 64), (256, 32, 64)),
    ("Maxpool3", (256, 32, 64), (256, 16, 32)),
    ("Conv_3_1", (256, 16, 32), (512, 16, 32)),
    ("Conv_3_2", (512, 16, 32), (512, 16, 32)),
    ("Maxpool4", (512, 16, 32), (512, 8, 16)),
    ("Conv_4_1", (512, 8, 16), (512, 8, 16)),
    ("Conv_4_2", (512, 8, 16), (512, 8, 16)),
    ("ST-RNN Layer1", (512, 8, 16), (512, 8, 16)),
    ("ST-RNN Layer2", (512, 8, 16), (512, 8, 16)),
    ("UpsamplingBilinear2D_1", (512, 8, 16), (512, 16, 32)),
    ("Up_Conv_4_1", (1024, 16, 32), (256, 16, 32)),
    ("Up_Conv_4_2", (256, 16, 32), (256, 16, 32)),
    ("UpsamplingBilinear2D_2", (256, 16, 32), (256, 32, 64)),
    ("Up_Conv_3_1", (512, 32, 64), (128, 32, 64)),
    ("Up_Conv_3_2", (128, 32, 64), (128, 32, 64)),
    ("UpsamplingBilinear2D_3", (128, 32, 64), (128, 64, 128)),
    ("Up_Conv_2_1", (256, 64, 128), (64, 64, 128)),
    ("Up_Conv_2_2", (64, 64, 128), (64, 64, 128)),
    ("UpsamplingBilinear2D_4", (64, 64, 128), (64, 128, 256)),
    ("Up_Conv_1_1", (128, 128, 256), (64, 128, 256)),
    ("Up_Conv_1_2", (64, 128, 256), (64, 128, 256)),
    ("Out_Conv", (64, 128, 256), (2, 128, 256)),
];

/// (variant, MACs in G, Params in M) for every architecture built here.
pub const COMPLEXITY: &[(&str, f64, f64)] = &[
    ("U-Net", 15.5, 13.4),
    ("SegNet", 50.2, 29.4),
    ("SegNet_ConvLSTM", 217.0, 67.2),
    ("UNet_ConvLSTM", 69.0, 51.1),
    ("SCNN_SegNet_ConvGRU1", 219.2, 43.7),
    ("SCNN_SegNet_ConvGRU2", 221.5, 57.9),
    ("SCNN_SegNet_ConvLSTM1", 220.0, 48.5),
    ("SCNN_SegNet_ConvLSTM2", 223.0, 67.3),
    ("SCNN_UNet_ConvGRU1", 77.9, 27.7),
    ("SCNN_UNet_ConvGRU2", 87.0, 41.9),
    ("SCNN_UNet_ConvLSTM1", 81.0, 32.4),
    ("SCNN_UNet_ConvLSTM2", 93.0, 51.3),
    ("SCNN_UNetLight_ConvGRU1", 19.6, 6.9),
    ("SCNN_UNetLight_ConvGRU2", 21.9, 10.5),
    ("SCNN_UNetLight_ConvLSTM1", 20.4, 8.1),
    ("SCNN_UNetLight_ConvLSTM2", 23.4, 12.8),
];

/// The rows the acceptance criteria name.
pub const HEADLINE: &[&str] = &[
    "U-Net",
    "SegNet",
    "UNet_ConvLSTM",
    "SegNet_ConvLSTM",
    "SCNN_UNet_ConvLSTM2",
    "SCNN_SegNet_ConvLSTM2",
    "SCNN_UNetLight_ConvGRU2",
];

pub fn published(name: &str) -> (f64, f64) {
    let &(_, macs, params) = COMPLEXITY
        .iter()
        .find(|r| r.0 == name)
        .unwrap_or_else(|| panic!("no published row for {name}"));
    (macs, params)
}
