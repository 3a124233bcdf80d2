import init, { synthesize, compareReport, densityCurve } from "./pkg/tapevar_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = { frequency: "#1f6fb4", market: "#d9541e" };

function status(msg) {
  $("status").textContent = msg || "";
}

function num(id) {
  const v = $(id).value.trim();
  return v === "" ? NaN : Number(v);
}

function fmt(x) {
  return x == null ? "–" : Number(x).toPrecision(7);
}

function guarded(fn) {
  return () => {
    status("");
    try {
      fn();
    } catch (e) {
      status(String(e.message || e));
    }
  };
}

function runSynth() {
  $("tape").value = synthesize(num("count"), num("seed"), num("start"), num("vol"), num("lots"));
}

function runCompare() {
  const report = JSON.parse(compareReport($("tape").value, num("center"), num("delta"), $("eps").value));
  const rows = new Map();
  for (const r of report.results) {
    if (!rows.has(r.epsilon)) rows.set(r.epsilon, {});
    rows.get(r.epsilon)[r.measure] = r.p_epsilon;
  }
  for (const d of report.divergence) rows.get(d.epsilon).divergence = d.divergence;
  const cols = ["frequency-empirical", "frequency-gaussian", "market-gaussian", "market-order3", "divergence"];
  let html = `<p>N = ${report.N}</p><table><tr><th>ε</th>${cols.map((c) => `<th>${c}</th>`).join("")}</tr>`;
  for (const [eps, row] of rows) {
    html += `<tr><td>${eps}</td>${cols.map((c) => `<td>${fmt(row[c])}</td>`).join("")}</tr>`;
  }
  html += "</table>";
  if (report.warnings.length) html += `<p>warnings: ${report.warnings.join("; ")}</p>`;
  $("report").innerHTML = html;
}

function runPlot() {
  const order = Number($("order").value);
  const curves = [];
  const notes = [];
  for (const measure of ["frequency", "market"]) {
    try {
      curves.push(JSON.parse(densityCurve($("tape").value, num("center"), num("delta"), measure, order, $("eps").value)));
    } catch (e) {
      notes.push(`${measure}: ${e.message || e}`);
    }
  }
  draw(curves);
  for (const c of curves) {
    const d = c.diagnostics;
    notes.push(
      `${c.measure}: mean ${fmt(c.mean)}, σ ${fmt(c.sigma)}, ∫density ${fmt(d.integral_of_density)}, ` +
        `min density ${fmt(d.min_density)}${d.warning ? " (negative pseudo-density)" : ""}`,
    );
    for (const q of c.quantiles) if (q.error) notes.push(`${c.measure} ε=${q.epsilon}: ${q.error}`);
  }
  $("curveinfo").innerHTML = notes.map((n) => `<div>${n}</div>`).join("");
}

function draw(curves) {
  const cv = $("chart");
  const g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  if (!curves.length) return;
  const pad = 40;
  const w = cv.width - 2 * pad;
  const h = cv.height - 2 * pad;
  const lo = Math.min(...curves.map((c) => c.mean - 5 * c.sigma));
  const hi = Math.max(...curves.map((c) => c.mean + 5 * c.sigma));
  let top = 0;
  for (const c of curves) {
    c.prices.forEach((p, i) => {
      if (p >= lo && p <= hi) top = Math.max(top, c.density[i]);
    });
  }
  const bottom = Math.min(0, ...curves.map((c) => c.diagnostics.min_density));
  const X = (p) => pad + ((p - lo) / (hi - lo)) * w;
  const Y = (d) => pad + h - ((d - bottom) / (top - bottom || 1)) * h;

  g.strokeStyle = "#999";
  g.lineWidth = 1;
  g.beginPath();
  g.moveTo(pad, Y(0));
  g.lineTo(pad + w, Y(0));
  g.stroke();
  g.fillStyle = "#444";
  g.font = "12px sans-serif";
  for (let k = 0; k <= 4; k++) {
    const p = lo + ((hi - lo) * k) / 4;
    g.fillText(p.toPrecision(6), X(p) - 20, pad + h + 16);
  }

  for (const c of curves) {
    g.strokeStyle = COLORS[c.measure];
    g.lineWidth = 2;
    g.setLineDash([]);
    g.beginPath();
    let started = false;
    c.prices.forEach((p, i) => {
      if (p < lo || p > hi) return;
      const x = X(p);
      const y = Y(c.density[i]);
      if (started) g.lineTo(x, y);
      else g.moveTo(x, y), (started = true);
    });
    g.stroke();
    g.setLineDash([5, 4]);
    g.lineWidth = 1;
    for (const q of c.quantiles) {
      if (q.price == null || q.price < lo || q.price > hi) continue;
      g.beginPath();
      g.moveTo(X(q.price), pad);
      g.lineTo(X(q.price), pad + h);
      g.stroke();
    }
  }
  g.setLineDash([]);
}

await init();
$("synth").onclick = guarded(runSynth);
$("compare").onclick = guarded(runCompare);
$("plot").onclick = guarded(runPlot);
guarded(() => {
  runSynth();
  runCompare();
  runPlot();
})();
