use crate::models::GridMap2D;

/// 64 x 64 map with 1-unit cells: two rooms of different size joined by a
/// corridor, each with some furniture so that no two poses see the same scan.
pub fn two_room_map() -> GridMap2D {
    let (w, h) = (64usize, 64usize);
    let mut occ = vec![true; w * h];
    let mut carve = |x0: usize, x1: usize, y0: usize, y1: usize, value: bool| {
        for y in y0..=y1 {
            for x in x0..=x1 {
                occ[y * w + x] = value;
            }
        }
    };
    // Room A (west) and room B (east).
    carve(4, 26, 8, 40, false);
    carve(38, 59, 20, 56, false);
    // Corridor between them.
    carve(27, 37, 26, 31, false);
    // Furniture.
    carve(10, 13, 30, 33, true);
    carve(18, 22, 12, 14, true);
    carve(44, 47, 44, 49, true);
    carve(52, 53, 28, 29, true);
    carve(4, 7, 8, 10, true);
    GridMap2D::from_occupancy(w, h, 1.0, occ).expect("built-in map is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rooms_are_connected_and_bounded() {
        let m = two_room_map();
        assert_eq!((m.width(), m.height()), (64, 64));
        assert!(!m.is_occupied(15, 20));
        assert!(!m.is_occupied(32, 28));
        assert!(!m.is_occupied(50, 40));
        assert!(m.is_occupied(0, 0) && m.is_occupied(63, 63));
        // Every border cell is occupied, so rays never leave the map.
        for i in 0..64 {
            assert!(m.is_occupied(i, 0) && m.is_occupied(i, 63) && m.is_occupied(0, i) && m.is_occupied(63, i));
        }
    }

    #[test]
    fn text_round_trip() {
        let m = two_room_map();
        let back = GridMap2D::parse(&m.to_text()).unwrap();
        assert_eq!(back.free_cells(), m.free_cells());
    }
}
