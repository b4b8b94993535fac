//! Small dense solves for the normal equations used by the fitters.

/// Solves `m · x = rhs` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `tol` times the largest absolute
/// entry of the original matrix.
pub fn solve<const N: usize>(m: &[[f64; N]; N], rhs: &[f64; N], tol: f64) -> Option<[f64; N]> {
    let mut a = *m;
    let mut x = *rhs;
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    for col in 0..N {
        let pivot_row = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() <= tol * scale {
            return None;
        }
        a.swap(col, pivot_row);
        x.swap(col, pivot_row);
        for row in col + 1..N {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..N {
                a[row][k] -= factor * a[col][k];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..N).rev() {
        let mut acc = x[col];
        for k in col + 1..N {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// Inverse by column-wise solves; symmetrised since callers pass normal matrices.
pub fn inverse_symmetric<const N: usize>(m: &[[f64; N]; N], tol: f64) -> Option<[[f64; N]; N]> {
    let mut inv = [[0.0; N]; N];
    for col in 0..N {
        let mut e = [0.0; N];
        e[col] = 1.0;
        let x = solve(m, &e, tol)?;
        for row in 0..N {
            inv[row][col] = x[row];
        }
    }
    for i in 0..N {
        for j in i + 1..N {
            let v = 0.5 * (inv[i][j] + inv[j][i]);
            inv[i][j] = v;
            inv[j][i] = v;
        }
    }
    Some(inv)
}
