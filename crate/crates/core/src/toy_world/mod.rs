//! Rendered toy scenes and a pixel-driven stand-in for an image-to-video
//! model.

mod corpus;
mod frame;
mod perceive;
mod scene;
mod video;

pub use corpus::{generate_corpus, Corpus, CorpusConfig, CorpusRecord, FailureKind, Prompt};
pub use frame::{Frame, Video, FRAME_SIZE};
pub use perceive::{perceive, Perception};
pub use scene::{coverage, render, ObjectKind, SceneError, SceneSpec, BAR_ASPECT, MOBILITY_SCALE_PX};
pub use video::{classify_motion, image_to_video, Dynamics, MotionClass, Variant};
