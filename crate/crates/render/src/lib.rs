pub mod bvh;
pub mod camera;
pub mod image;
pub mod shade;

pub use bvh::{brute_force_hit, Bvh, Hit, Ray};
pub use camera::Camera;
pub use image::{render_image, save_png, ShadeMode, BACKGROUND};
pub use shade::PointCloudTexture;
