import init, { perturbationHistogram, resamplingMean, simulateFpl } from "./pkg/bandit_batch_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function bars(canvas, values, color) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const max = Math.max(...values, 1e-12);
  const w = width / values.length;
  ctx.fillStyle = color;
  values.forEach((v, i) => {
    const h = (v / max) * (height - 10);
    ctx.fillRect(i * w, height - h, Math.max(w - 1, 1), h);
  });
}

function line(canvas, values, color) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  ctx.strokeStyle = color;
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = (i / Math.max(values.length - 1, 1)) * width;
    const y = height - 5 - ((v - lo) / span) * (height - 10);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText(`entropy ${hi.toFixed(3)}`, 5, 12);
  ctx.fillText(`${lo.toFixed(3)}`, 5, height - 5);
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    $(out).textContent = `error: ${e}`;
  }
}

function histogram() {
  guard("h-out", () => {
    const h = perturbationHistogram($("h-family").value, num("h-shape"), num("h-scale"), num("h-draws"), 60, BigInt(num("h-seed")));
    bars($("h-canvas"), Array.from(h.counts), "#4477aa");
    const edges = h.edges;
    $("h-out").textContent =
      `log10 range ${edges[0].toFixed(2)} .. ${edges[edges.length - 1].toFixed(2)}; ` +
      `median ${h.median.toFixed(4)} (closed form ${h.expectedMedian.toFixed(4)})`;
    h.free();
  });
}

function resampling() {
  guard("g-out", () => {
    const [empirical, closed] = resamplingMean(num("g-arms"), num("g-cap"), num("g-trials"), BigInt(num("g-seed")));
    $("g-out").textContent = `mean min(sigma, M) = ${empirical.toFixed(4)}; (1 - (1 - p)^M) / p = ${closed.toFixed(4)}`;
  });
}

function simulation() {
  guard("f-out", () => {
    const s = simulateFpl(
      num("f-arms"), num("f-batch"), num("f-rounds"), num("f-eta"),
      $("f-family").value, num("f-shape"), num("f-scale"), BigInt(num("f-seed")),
    );
    const counts = Array.from(s.counts);
    const entropy = Array.from(s.entropy);
    bars($("f-counts"), counts, "#228833");
    line($("f-entropy"), entropy, "#aa3377");
    const half = Math.floor(counts.length / 2);
    const sum = (a) => a.reduce((x, y) => x + y, 0);
    $("f-out").textContent =
      `selections in low-reward half ${sum(counts.slice(0, half))}, high-reward half ${sum(counts.slice(half))}; ` +
      `final entropy ${entropy[entropy.length - 1].toFixed(3)}`;
    s.free();
  });
}

await init();
$("h-run").onclick = histogram;
$("g-run").onclick = resampling;
$("f-run").onclick = simulation;
histogram();
resampling();
simulation();
