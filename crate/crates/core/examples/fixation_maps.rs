//! Turns sparse gaze points into a dense saliency map and prints it as ASCII.

use rgbd_vsod::data::{fixations_to_saliency, FixationField};

fn main() -> rgbd_vsod::Result<()> {
    let field = FixationField::new(vec![(6.0, 5.0), (7.5, 6.0), (24.0, 14.0)], (20, 32))?;
    for sigma in [1.5, 4.0] {
        let map = fixations_to_saliency(&field, sigma)?;
        println!("sigma = {sigma}");
        let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
        for y in 0..map.height {
            let row: String = (0..map.width)
                .map(|x| shades[((map.get(y, x) * 9.0).round() as usize).min(9)])
                .collect();
            println!("|{row}|");
        }
    }
    Ok(())
}
