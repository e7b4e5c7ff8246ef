//! Hand-built graphs and scenes shared by tests.

use crate::task::{
    AttributeKind, Category, Frame, GraphBuilder, Location, NodeId, Scene, SceneObject, StimulusId, TaskGraph,
};

fn one(index: usize, category: Category, object_index: u8, location: Location, ordinal: u32) -> Frame {
    Frame {
        index,
        objects: vec![SceneObject {
            stimulus: StimulusId { category, object_index, view_index: 0 },
            location,
            ordinal: Some(ordinal),
        }],
    }
}

/// The nine-frame composite example: seven observed objects, a switch on
/// identity(3) == identity(2), else-branch location of object 1.
pub fn figure_graph() -> TaskGraph {
    let mut b = GraphBuilder::new();
    let frames = [0usize, 1, 2, 3, 4, 6, 8];
    let sel: Vec<NodeId> = frames.iter().enumerate().map(|(i, f)| b.select(*f, i as u32 + 1)).collect();
    let cond = b.is_same(AttributeKind::Identity, sel[2], sel[1]);
    let left = b.not_same(AttributeKind::Location, sel[6], sel[5]);
    let right = b.is_same(AttributeKind::Identity, sel[4], sel[3]);
    let then = b.and(left, right);
    let otherwise = b.get_attr(AttributeKind::Location, sel[0]);
    let root = b.switch(cond, then, otherwise);
    b.build(root)
}

/// Scene for [`figure_graph`] with identity(3) != identity(2) and object 1
/// in the top right, so the answer is "top right".
pub fn figure_scene() -> Scene {
    Scene::new(vec![
        one(0, Category::Chairs, 0, Location::TopRight, 1),
        one(1, Category::Chairs, 1, Location::TopRight, 2),
        one(2, Category::Benches, 2, Location::TopLeft, 3),
        one(3, Category::Benches, 3, Location::BottomRight, 4),
        one(4, Category::Boats, 4, Location::BottomLeft, 5),
        Frame::blank(5),
        one(6, Category::Benches, 5, Location::BottomRight, 6),
        Frame::blank(7),
        one(8, Category::Planes, 6, Location::TopLeft, 7),
    ])
    .expect("fixture scene is valid")
}
