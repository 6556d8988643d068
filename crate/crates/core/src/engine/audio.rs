use crate::resonator::{process_unchecked, FilterBank, FilterState};

use super::{Chunk, EngineConfig, ACCUMULATOR_LEN};

/// Audio context. Every buffer is allocated in the constructor; `render`
/// only copies, filters and mixes.
pub struct Renderer {
    bank: FilterBank,
    old_bank: FilterBank,
    state: FilterState,
    old_state: FilterState,
    mailbox: triple_buffer::Output<FilterBank>,
    queue: rtrb::Consumer<Chunk>,
    accum: Box<[f64]>,
    head: u64,
    cursors: [u64; 2],
    input: Box<[f64]>,
    scratch: Box<[f64]>,
    block_size: usize,
    fade_len: usize,
    /// Samples of the current crossfade already rendered; `None` when idle.
    fade_pos: Option<usize>,
    swaps: u64,
    overflow: u64,
}

impl Renderer {
    pub(crate) fn new(
        config: &EngineConfig,
        initial: FilterBank,
        mailbox: triple_buffer::Output<FilterBank>,
        queue: rtrb::Consumer<Chunk>,
    ) -> Self {
        let state = FilterState::for_bank(&initial);
        Renderer {
            old_bank: initial.clone(),
            bank: initial,
            old_state: state.clone(),
            state,
            mailbox,
            queue,
            accum: vec![0.0; ACCUMULATOR_LEN].into_boxed_slice(),
            head: 0,
            cursors: [0; 2],
            input: vec![0.0; config.block_size].into_boxed_slice(),
            scratch: vec![0.0; config.block_size].into_boxed_slice(),
            block_size: config.block_size,
            fade_len: config.crossfade_len(),
            fade_pos: None,
            swaps: 0,
            overflow: 0,
        }
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Samples rendered so far.
    pub fn position(&self) -> u64 {
        self.head
    }

    /// Coefficient sets taken from the mailbox so far.
    pub fn swaps(&self) -> u64 {
        self.swaps
    }

    /// Excitation samples dropped because they were scheduled too far ahead.
    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn state_is_finite(&self) -> bool {
        self.state.is_finite()
    }

    /// Fills `out`. Blocks are aligned to absolute sample positions, so the
    /// output does not depend on how a stream is split across calls. The
    /// mailbox is checked only at block starts, which lets a crossfade
    /// (whole blocks long) finish before the next swap; the audio side never
    /// waits.
    pub fn render(&mut self, out: &mut [f64]) {
        let mut rest = out;
        while !rest.is_empty() {
            let offset = (self.head % self.block_size as u64) as usize;
            let (seg, tail) = rest.split_at_mut(rest.len().min(self.block_size - offset));
            if offset == 0 {
                self.take_coefficients();
            }
            self.render_segment(seg);
            rest = tail;
        }
    }

    fn render_segment(&mut self, out: &mut [f64]) {
        self.drain_queue();
        let n = out.len();
        let input = &mut self.input[..n];
        for (k, x) in input.iter_mut().enumerate() {
            let slot = ((self.head + k as u64) % ACCUMULATOR_LEN as u64) as usize;
            *x = self.accum[slot];
            self.accum[slot] = 0.0;
        }
        process_unchecked(&self.bank, &mut self.state, input, out);
        if let Some(pos) = self.fade_pos {
            let old = &mut self.scratch[..n];
            process_unchecked(&self.old_bank, &mut self.old_state, input, old);
            let len = self.fade_len as f64;
            for (k, (y, o)) in out.iter_mut().zip(old.iter()).enumerate() {
                let w = ((pos + k + 1) as f64 / len).min(1.0);
                *y = w * *y + (1.0 - w) * o;
            }
            self.fade_pos = (pos + n < self.fade_len).then_some(pos + n);
        }
        self.head += n as u64;
    }

    fn take_coefficients(&mut self) {
        if !self.mailbox.updated() {
            return;
        }
        if self.fade_len > 0 {
            self.old_bank.copy_from(&self.bank);
            self.old_state.copy_from(&self.state);
            self.fade_pos = Some(0);
        }
        self.mailbox.update();
        self.bank.copy_from(self.mailbox.output_buffer_mut());
        self.swaps += 1;
    }

    fn drain_queue(&mut self) {
        while let Ok(chunk) = self.queue.pop() {
            let s = chunk.stream as usize;
            let start = if chunk.restart {
                self.head
            } else {
                self.cursors[s].max(self.head)
            };
            for (k, v) in chunk.data[..chunk.len].iter().enumerate() {
                let t = start + k as u64;
                if t - self.head >= ACCUMULATOR_LEN as u64 {
                    self.overflow += 1;
                    continue;
                }
                self.accum[(t % ACCUMULATOR_LEN as u64) as usize] += v;
            }
            self.cursors[s] = start + chunk.len as u64;
        }
    }
}
