use super::{NumericsError, Scalar, Tape, Var};

/// Tape handles of one GRU cell's parameters.
///
/// Gate layout along the output axis of `w_x`/`b` is `[update | reset | candidate]`:
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// n  = tanh(x Wn + (r * h) Un + bn)
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    /// `[input, 3H]`
    pub w_x: Var,
    /// `[H, 2H]`, update and reset recurrences.
    pub u_zr: Var,
    /// `[H, H]`, candidate recurrence.
    pub u_n: Var,
    /// `[3H]`
    pub b: Var,
}

/// One GRU step for a batch: `x` is `[B, input]`, `h_prev` is `[B, H]`.
pub fn gru_cell<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, h_prev: Var, p: &GruParams) -> Result<Var, NumericsError> {
    let (bx, input) = tape.value(x).dims2("gru_cell")?;
    let (bh, hidden) = tape.value(h_prev).dims2("gru_cell")?;
    if bx != bh {
        return Err(NumericsError::Shape { op: "gru_cell", detail: format!("batch {bx} vs {bh}") });
    }
    let expect = [
        (p.w_x, [input, 3 * hidden]),
        (p.u_zr, [hidden, 2 * hidden]),
        (p.u_n, [hidden, hidden]),
    ];
    for (v, shape) in expect {
        if tape.value(v).shape() != shape {
            return Err(NumericsError::Shape {
                op: "gru_cell",
                detail: format!("parameter {:?}, expected {:?}", tape.value(v).shape(), shape),
            });
        }
    }
    if tape.value(p.b).len() != 3 * hidden {
        return Err(NumericsError::Shape { op: "gru_cell", detail: format!("bias {:?}", tape.value(p.b).shape()) });
    }

    let xw = tape.matmul(x, p.w_x)?;
    let xw = tape.add_bias(xw, p.b)?;
    let x_zr = tape.slice_cols(xw, 0, 2 * hidden)?;
    let x_n = tape.slice_cols(xw, 2 * hidden, hidden)?;
    let h_zr = tape.matmul(h_prev, p.u_zr)?;
    let zr = tape.add(x_zr, h_zr)?;
    let zr = tape.sigmoid(zr)?;
    let z = tape.slice_cols(zr, 0, hidden)?;
    let r = tape.slice_cols(zr, hidden, hidden)?;
    let rh = tape.mul(r, h_prev)?;
    let h_n = tape.matmul(rh, p.u_n)?;
    let n = tape.add(x_n, h_n)?;
    let n = tape.tanh(n)?;
    let diff = tape.sub(h_prev, n)?;
    let zd = tape.mul(z, diff)?;
    tape.add(n, zd)
}
