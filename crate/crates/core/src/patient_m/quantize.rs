use crate::error::{Error, Result};
use crate::numerics::{squared_distance, Matrix};

/// Index of the nearest codebook row for every row of `slots`, by Euclidean
/// distance. Ties go to the lowest index.
pub fn nearest_code_indices(codebook: &Matrix, slots: &Matrix) -> Result<Vec<usize>> {
    if codebook.rows() == 0 {
        return Err(Error::State("codebook is empty".into()));
    }
    if codebook.cols() != slots.cols() {
        return Err(Error::Dimension(format!(
            "slots of width {} against codes of width {}",
            slots.cols(),
            codebook.cols()
        )));
    }
    Ok((0..slots.rows())
        .map(|r| {
            let slot = slots.row(r);
            let mut best = (0, f64::INFINITY);
            for k in 0..codebook.rows() {
                let d = squared_distance(slot, codebook.row(k));
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0
        })
        .collect())
}

/// Mean over each patient's `slots_per_patient` consecutive slot rows.
pub fn slot_mean(slots: &Matrix, slots_per_patient: usize) -> Result<Matrix> {
    if slots_per_patient == 0 || !slots.rows().is_multiple_of(slots_per_patient) {
        return Err(Error::Dimension(format!(
            "{} slots do not split into groups of {slots_per_patient}",
            slots.rows()
        )));
    }
    let patients = slots.rows() / slots_per_patient;
    let mut out = Matrix::zeros(patients, slots.cols());
    for r in 0..slots.rows() {
        let p = r / slots_per_patient;
        for (c, v) in slots.row(r).iter().enumerate() {
            let cur = out.get(p, c);
            out.set(p, c, cur + v / slots_per_patient as f64);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_by_inspection() {
        let cb = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let slots = Matrix::from_rows(&[[0.9, 0.8]]).unwrap();
        assert_eq!(nearest_code_indices(&cb, &slots).unwrap(), vec![1]);
    }

    #[test]
    fn ties_prefer_lowest_index() {
        let cb = Matrix::from_rows(&[[1.0, 0.0], [5.0, 5.0], [-1.0, 0.0]]).unwrap();
        let slots = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        assert_eq!(nearest_code_indices(&cb, &slots).unwrap(), vec![0]);
    }

    #[test]
    fn mean_of_two_slots() {
        let slots = Matrix::from_rows(&[[1.0, 3.0], [3.0, 5.0]]).unwrap();
        assert_eq!(slot_mean(&slots, 2).unwrap().data(), &[2.0, 4.0]);
    }
}
