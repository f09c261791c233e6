//! The shipped example scenes must stay loadable and well-formed, since the
//! acceptance suite and the CLI walkthrough both build on them.

use emtwin::math::vec3;
use emtwin::scene::{world_geometry, Scene};
use std::collections::BTreeSet;
use std::path::Path;

fn fixture(name: &str) -> Scene {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let scene = Scene::load_path(Path::new(&path)).unwrap();
    scene.validate().unwrap();
    scene
}

#[test]
fn shoebox_is_a_single_inward_room() {
    let scene = fixture("shoebox.scene");
    assert_eq!(scene.objects.len(), 1);
    let (tris, wedges) = world_geometry(&scene);
    assert_eq!(tris.len(), 12);
    assert!(wedges.is_empty());
    let center = vec3(0.0, 0.0, 1.3);
    for t in &tris {
        let to_center = center - (t.v[0] + t.v[1] + t.v[2]) / 3.0;
        assert!(t.normal.dot(to_center) > 0.0, "wall normal must face the interior");
    }
}

#[test]
fn desk_scene_has_the_expected_layout() {
    let scene = fixture("desk.scene");
    let ids: Vec<u32> = scene.objects.iter().map(|o| o.id).collect();
    assert_eq!(ids, [1, 2, 3, 4]);

    let (tris, wedges) = world_geometry(&scene);
    assert_eq!(tris.len(), 62);
    let mats: BTreeSet<u32> = tris.iter().map(|t| t.material_id).collect();
    assert_eq!(mats, BTreeSet::from([1, 2, 5]));
    assert_eq!(wedges.len(), 14);

    let table = scene.object(2).unwrap();
    let table_mats: BTreeSet<u32> =
        table.surfaces.iter().map(|s| s.material_id).collect();
    assert_eq!(table_mats, BTreeSet::from([2, 5]), "table mixes wood and metal");
    let area_of = |mat: u32| -> f64 {
        table
            .surfaces
            .iter()
            .filter(|s| s.material_id == mat)
            .flat_map(|s| s.triangles.iter())
            .map(|t| 0.5 * (t[1] - t[0]).cross(t[2] - t[0]).norm())
            .sum()
    };
    let (metal, wood) = (area_of(5), area_of(2));
    assert!(
        (metal - wood).abs() < 0.05 * (metal + wood),
        "slats split the table surface about evenly: metal {metal:.3} wood {wood:.3}"
    );

    for t in tris.iter().filter(|t| t.object_id != 1) {
        assert!(
            t.normal.z.abs() > 0.99 || t.normal.z.abs() < 0.01,
            "furniture faces are axis aligned"
        );
    }

    let moved = scene.object(3).unwrap().pose;
    let mut pose = moved;
    pose.position = pose.position + vec3(1.2, -0.9, 0.0);
    let edited = scene.with_edits(&[(3, pose)]).unwrap();
    edited.validate().unwrap();
    assert!((pose.position - moved.position).norm() >= 1.0);
}
