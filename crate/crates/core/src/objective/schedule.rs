/// Linear KL warm-up: `min(1, epoch / warmup_epochs)`, and 1 when there is
/// no warm-up.
pub fn kl_warmup_beta(epoch: usize, warmup_epochs: usize) -> f64 {
    if warmup_epochs == 0 {
        return 1.0;
    }
    (epoch as f64 / warmup_epochs as f64).min(1.0)
}
